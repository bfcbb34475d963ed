/** Affine BEV raster mapping, mirroring the server's published metadata.
 *
 * World coordinates are meters on the (x, z) plane; pixel (0, 0) is the
 * corner at (x_min, z_min) and pixel centers sit half a cell in. Canvas
 * coordinates add zoom and pan on top of raster pixels.
 */

export interface BevMeta {
  width: number;
  height: number;
  meters_per_pixel: number;
  x_min: number;
  z_min: number;
}

export interface ViewTransform {
  zoom: number; // canvas pixels per raster pixel, > 0
  panX: number; // canvas offset in canvas pixels
  panY: number;
}

export function worldToPixel(m: BevMeta, x: number, z: number): [number, number] {
  return [
    Math.floor((x - m.x_min) / m.meters_per_pixel),
    Math.floor((z - m.z_min) / m.meters_per_pixel),
  ];
}

/** Continuous (sub-pixel) raster position of a world point. */
export function worldToPixelF(m: BevMeta, x: number, z: number): [number, number] {
  return [
    (x - m.x_min) / m.meters_per_pixel - 0.5,
    (z - m.z_min) / m.meters_per_pixel - 0.5,
  ];
}

export function pixelToWorld(m: BevMeta, px: number, pz: number): [number, number] {
  return [
    m.x_min + (px + 0.5) * m.meters_per_pixel,
    m.z_min + (pz + 0.5) * m.meters_per_pixel,
  ];
}

export function containsWorld(m: BevMeta, x: number, z: number): boolean {
  return (
    x >= m.x_min &&
    x < m.x_min + m.width * m.meters_per_pixel &&
    z >= m.z_min &&
    z < m.z_min + m.height * m.meters_per_pixel
  );
}

export function pixelToCanvas(v: ViewTransform, px: number, pz: number): [number, number] {
  return [px * v.zoom + v.panX, pz * v.zoom + v.panY];
}

export function canvasToPixel(v: ViewTransform, cx: number, cy: number): [number, number] {
  return [Math.floor((cx - v.panX) / v.zoom), Math.floor((cy - v.panY) / v.zoom)];
}

/** Canvas positions of a cuboid footprint reported by the server. */
export function footprintToCanvas(
  m: BevMeta,
  v: ViewTransform,
  bevCorners: [number, number][],
): [number, number][] {
  return bevCorners.map(([x, z]) => {
    const [px, pz] = worldToPixelF(m, x, z);
    return pixelToCanvas(v, px, pz);
  });
}
