/** Typed client for the annotation service HTTP API. */

import type { BevMeta } from "./mapping.js";

export interface CuboidDto {
  cx: number;
  cy: number;
  cz: number;
  h: number;
  w: number;
  l: number;
  theta: number;
}

export interface BevPayload extends BevMeta {
  max_height: number[][];
  density: number[][];
}

export interface ClickResponse {
  status: "ok" | "no-points" | "recorded";
  x?: number;
  z?: number;
  cuboid?: CuboidDto;
  confidence?: number;
  candidates?: { x: number; z: number }[];
  bev_corners?: [number, number][];
}

export interface Annotations {
  clicks: { cls: string; x: number; z: number }[];
  cuboids: (CuboidDto & { confidence: number })[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    throw new ApiError(resp.status, await resp.text());
  }
  return (await resp.json()) as T;
}

export class Client {
  constructor(private base: string) {}

  async scenes(): Promise<string[]> {
    const data = await asJson<{ scenes: string[] }>(await fetch(`${this.base}/scenes`));
    return data.scenes;
  }

  bev(scene: string): Promise<BevPayload> {
    return fetch(`${this.base}/scenes/${scene}/bev`).then((r) => asJson<BevPayload>(r));
  }

  annotations(scene: string): Promise<Annotations> {
    return fetch(`${this.base}/scenes/${scene}/annotations`).then((r) =>
      asJson<Annotations>(r),
    );
  }

  click(
    scene: string,
    body: { x?: number; z?: number; px?: number; pz?: number; mode?: string },
  ): Promise<ClickResponse> {
    return fetch(`${this.base}/scenes/${scene}/clicks`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => asJson<ClickResponse>(r));
  }

  accept(scene: string, cuboid: CuboidDto, confidence: number): Promise<{ index: number }> {
    return fetch(`${this.base}/scenes/${scene}/accept`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ cuboid, confidence }),
    }).then((r) => asJson<{ status: string; index: number }>(r));
  }

  remove(scene: string, index: number): Promise<void> {
    return fetch(`${this.base}/scenes/${scene}/annotations/${index}`, {
      method: "DELETE",
    }).then((r) => asJson<{ status: string }>(r)) as Promise<unknown> as Promise<void>;
  }
}
