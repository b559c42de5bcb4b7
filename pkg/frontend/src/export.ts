/**
 * export.ts — render the current view's SVG to a PNG the mother can share.
 *
 * The SVG is built purely from view-model output (cm labels, series, shapes);
 * tokens and IDs are never drawn, so the exported image cannot leak them.
 */

export interface ExportResult {
  blob: Blob;
  width: number;
  height: number;
}

export type Rasterizer = (svg: string, width: number, height: number) => Promise<Blob>;

/** Browser rasterizer: SVG data URL -> Image -> canvas -> PNG blob. */
export const canvasRasterizer: Rasterizer = (svg, width, height) =>
  new Promise((resolve, reject) => {
    const image = new Image();
    image.onload = () => {
      const canvas = document.createElement("canvas");
      canvas.width = width;
      canvas.height = height;
      const ctx = canvas.getContext("2d");
      if (!ctx) {
        reject(new Error("canvas 2d context unavailable"));
        return;
      }
      ctx.fillStyle = "#ffffff";
      ctx.fillRect(0, 0, width, height);
      ctx.drawImage(image, 0, 0, width, height);
      canvas.toBlob((blob) => {
        if (blob) {
          resolve(blob);
        } else {
          reject(new Error("PNG encoding failed"));
        }
      }, "image/png");
    };
    image.onerror = () => reject(new Error("SVG raster failed"));
    image.src = `data:image/svg+xml;charset=utf-8,${encodeURIComponent(svg)}`;
  });

/** Serialize and rasterize one view SVG at its declared size. */
export async function exportViewSvg(svgEl: SVGSVGElement, rasterize: Rasterizer): Promise<ExportResult> {
  const width = Number(svgEl.getAttribute("width"));
  const height = Number(svgEl.getAttribute("height"));
  const markup = svgEl.outerHTML.includes("xmlns")
    ? svgEl.outerHTML
    : svgEl.outerHTML.replace("<svg", '<svg xmlns="http://www.w3.org/2000/svg"');
  const blob = await rasterize(markup, width, height);
  if (!blob.size) {
    throw new Error("empty PNG");
  }
  return { blob, width, height };
}

export function triggerDownload(result: ExportResult, filename: string): void {
  const url = URL.createObjectURL(result.blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = filename;
  link.click();
  URL.revokeObjectURL(url);
}
