/** Sample strip: one thumbnail per selected sample in the active mode,
 * plus the hover preview of the source image.
 */

import { StoreSnapshot } from "./store.js";

export class SampleStrip {
  constructor(
    private readonly strip: HTMLElement,
    private readonly preview: HTMLImageElement,
  ) {}

  render(snap: StoreSnapshot): void {
    this.strip.replaceChildren(
      ...snap.thumbnails.map((thumb) => {
        const cell = document.createElement("figure");
        cell.className = "thumb";
        const img = document.createElement("img");
        img.src = thumb.url;
        img.width = 64;
        img.height = 64;
        img.alt = `sample ${thumb.sampleIndex}`;
        const label = document.createElement("figcaption");
        label.textContent = `#${thumb.sampleIndex}`;
        cell.append(img, label);
        return cell;
      }),
    );
    if (snap.hoverUrl) {
      this.preview.src = snap.hoverUrl;
      this.preview.style.display = "";
    } else {
      this.preview.style.display = "none";
    }
  }
}
