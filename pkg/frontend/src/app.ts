/** View state and rendering logic for the BEV annotation UI.
 *
 * Everything here is DOM-free and testable: rendering produces RGBA bytes
 * and overlay polylines in canvas coordinates; index.html wires the real
 * canvas and event listeners around it.
 */

import type { Annotations, BevPayload, Client, ClickResponse, CuboidDto } from "./api.js";
import {
  canvasToPixel,
  containsWorld,
  footprintToCanvas,
  pixelToCanvas,
  pixelToWorld,
  worldToPixelF,
  type ViewTransform,
} from "./mapping.js";

export interface OverlayToggles {
  maxHeight: boolean; // raster channel: max point height per cell
  density: boolean; // raster channel: point count per cell
  candidates: boolean;
  cuboids: boolean;
}

export interface Marker {
  kind: "candidate" | "click" | "prompt";
  x: number; // canvas coords
  y: number;
}

export interface Polygon {
  points: [number, number][]; // canvas coords, closed implicitly
  label: string;
  persistent: boolean; // accepted (server-side) vs pending proposal
}

export interface Scene {
  id: string;
  bev: BevPayload;
  annotations: Annotations;
  pending?: { cuboid: CuboidDto; confidence: number; corners: [number, number][] };
  candidates: { x: number; z: number }[];
  prompt: string | null;
}

/** Compose the two raster channels into RGBA bytes (height green, density blue). */
export function rasterToRgba(
  bev: BevPayload,
  toggles: OverlayToggles,
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(bev.width * bev.height * 4));
  for (let r = 0; r < bev.height; r++) {
    for (let c = 0; c < bev.width; c++) {
      const i = (r * bev.width + c) * 4;
      out[i + 1] = toggles.maxHeight ? Math.round(255 * bev.max_height[r][c]) : 0;
      out[i + 2] = toggles.density ? Math.round(255 * bev.density[r][c]) : 0;
      out[i + 3] = 255;
    }
  }
  return out;
}

/** Overlay geometry for the current scene in canvas coordinates. */
export function buildOverlays(
  scene: Scene,
  view: ViewTransform,
  toggles: OverlayToggles,
): { polygons: Polygon[]; markers: Marker[] } {
  const polygons: Polygon[] = [];
  const markers: Marker[] = [];
  const m = scene.bev;
  if (toggles.cuboids) {
    scene.annotations.cuboids.forEach((c, k) => {
      polygons.push({
        points: footprintToCanvas(m, view, cuboidBevCorners(c)),
        label: `#${k} ${c.confidence.toFixed(2)}`,
        persistent: true,
      });
    });
    if (scene.pending) {
      polygons.push({
        points: footprintToCanvas(m, view, scene.pending.corners),
        label: scene.pending.confidence.toFixed(2),
        persistent: false,
      });
    }
  }
  if (toggles.candidates) {
    for (const cand of scene.candidates) {
      const [px, pz] = worldToPixelF(m, cand.x, cand.z);
      const [x, y] = pixelToCanvas(view, px, pz);
      markers.push({ kind: "candidate", x, y });
    }
  }
  for (const click of scene.annotations.clicks) {
    const [px, pz] = worldToPixelF(m, click.x, click.z);
    const [x, y] = pixelToCanvas(view, px, pz);
    markers.push({ kind: "click", x, y });
  }
  return { polygons, markers };
}

/** Client-side BEV footprint of a cuboid (matches the server's corner order). */
export function cuboidBevCorners(c: CuboidDto): [number, number][] {
  const s = Math.sin(c.theta);
  const co = Math.cos(c.theta);
  const hl = c.l / 2;
  const hw = c.w / 2;
  // length axis (s, co), width axis (co, -s) on the (x, z) plane
  return [
    [c.cx + hl * s + hw * co, c.cz + hl * co - hw * s],
    [c.cx + hl * s - hw * co, c.cz + hl * co + hw * s],
    [c.cx - hl * s - hw * co, c.cz - hl * co + hw * s],
    [c.cx - hl * s + hw * co, c.cz - hl * co - hw * s],
  ];
}

export class App {
  scene: Scene | null = null;
  view: ViewTransform = { zoom: 1, panX: 0, panY: 0 };
  toggles: OverlayToggles = {
    maxHeight: true,
    density: true,
    candidates: true,
    cuboids: true,
  };
  private inflight = false;

  constructor(private client: Client) {}

  async loadScene(id: string): Promise<Scene> {
    const [bev, annotations] = await Promise.all([
      this.client.bev(id),
      this.client.annotations(id),
    ]);
    this.scene = { id, bev, annotations, candidates: [], prompt: null };
    return this.scene;
  }

  /** Canvas click -> world click -> active annotation request. */
  async clickAt(canvasX: number, canvasY: number): Promise<ClickResponse | null> {
    const scene = this.scene;
    if (!scene || this.inflight) return null; // one annotation call at a time
    const [px, pz] = canvasToPixel(this.view, canvasX, canvasY);
    const [x, z] = pixelToWorld(scene.bev, px, pz);
    if (!containsWorld(scene.bev, x, z)) {
      scene.prompt = "click inside the BEV window";
      return null;
    }
    this.inflight = true;
    try {
      const resp = await this.client.click(scene.id, { x, z, mode: "active" });
      scene.annotations.clicks.push({ cls: "Car", x, z });
      if (resp.status === "no-points") {
        scene.prompt = "no points here — try clicking closer to the object";
        scene.pending = undefined;
        scene.candidates = [];
      } else if (resp.status === "ok" && resp.cuboid && resp.bev_corners) {
        scene.prompt = null;
        scene.pending = {
          cuboid: resp.cuboid,
          confidence: resp.confidence ?? 0,
          corners: resp.bev_corners,
        };
        scene.candidates = resp.candidates ?? [];
      }
      return resp;
    } finally {
      this.inflight = false;
    }
  }

  /** Persist the pending cuboid; it becomes part of the annotations list. */
  async acceptPending(): Promise<number | null> {
    const scene = this.scene;
    if (!scene || !scene.pending) return null;
    const { cuboid, confidence } = scene.pending;
    const { index } = await this.client.accept(scene.id, cuboid, confidence);
    scene.annotations = await this.client.annotations(scene.id);
    scene.pending = undefined;
    scene.candidates = [];
    return index;
  }

  async deleteAnnotation(index: number): Promise<void> {
    const scene = this.scene;
    if (!scene) return;
    await this.client.remove(scene.id, index);
    scene.annotations = await this.client.annotations(scene.id);
  }
}
