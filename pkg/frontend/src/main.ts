/** DOM wiring: canvas, toolbar, and event listeners around App. */

import { Client } from "./api.js";
import { App, buildOverlays, rasterToRgba } from "./app.js";

const BASE = (window as unknown as { CLICKDET_BASE?: string }).CLICKDET_BASE ?? "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function start() {
  const client = new Client(BASE);
  const app = new App(client);
  const canvas = el<HTMLCanvasElement>("bev");
  const ctx = canvas.getContext("2d")!;
  const sceneSelect = el<HTMLSelectElement>("scene");
  const status = el<HTMLSpanElement>("status");
  const acceptBtn = el<HTMLButtonElement>("accept");

  let raster: ImageBitmap | null = null;

  async function rebuildRaster() {
    if (!app.scene) return;
    const bev = app.scene.bev;
    const rgba = rasterToRgba(bev, app.toggles);
    raster = await createImageBitmap(new ImageData(rgba, bev.width, bev.height));
  }

  function draw() {
    if (!app.scene) return;
    ctx.save();
    ctx.fillStyle = "#000";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (raster) {
      ctx.setTransform(app.view.zoom, 0, 0, app.view.zoom, app.view.panX, app.view.panY);
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(raster, 0, 0);
      ctx.setTransform(1, 0, 0, 1, 0, 0);
    }
    const { polygons, markers } = buildOverlays(app.scene, app.view, app.toggles);
    for (const poly of polygons) {
      ctx.strokeStyle = poly.persistent ? "#4caf50" : "#ffd600";
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      poly.points.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
      ctx.closePath();
      ctx.stroke();
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillText(poly.label, poly.points[0][0] + 3, poly.points[0][1] - 3);
    }
    for (const mark of markers) {
      ctx.fillStyle = mark.kind === "candidate" ? "#29b6f6" : "#ef5350";
      ctx.beginPath();
      ctx.arc(mark.x, mark.y, mark.kind === "candidate" ? 2 : 3, 0, 2 * Math.PI);
      ctx.fill();
    }
    status.textContent = app.scene.prompt ?? (app.scene.pending ? "proposal ready — accept?" : "");
    acceptBtn.disabled = !app.scene.pending;
    ctx.restore();
  }

  async function switchScene(id: string) {
    await app.loadScene(id);
    await rebuildRaster();
    draw();
  }

  canvas.addEventListener("click", async (ev) => {
    const rect = canvas.getBoundingClientRect();
    await app.clickAt(ev.clientX - rect.left, ev.clientY - rect.top);
    draw();
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    const factor = ev.deltaY < 0 ? 1.25 : 0.8;
    app.view.zoom = Math.max(0.25, app.view.zoom * factor);
    draw();
  });
  acceptBtn.addEventListener("click", async () => {
    await app.acceptPending();
    draw();
  });
  for (const key of ["maxHeight", "density", "candidates", "cuboids"] as const) {
    el<HTMLInputElement>(`toggle-${key}`).addEventListener("change", async (ev) => {
      app.toggles[key] = (ev.target as HTMLInputElement).checked;
      await rebuildRaster();
      draw();
    });
  }

  const scenes = await client.scenes();
  for (const id of scenes) {
    const opt = document.createElement("option");
    opt.value = opt.textContent = id;
    sceneSelect.appendChild(opt);
  }
  sceneSelect.addEventListener("change", () => switchScene(sceneSelect.value));
  if (scenes.length) await switchScene(scenes[0]);
}

start().catch((err) => {
  document.body.textContent = `failed to start: ${err}`;
});
