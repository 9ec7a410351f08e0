/**
 * UI contract against a live composition server (acceptance check):
 * after a scripted drag/rotate/reset/slider sequence the client's scene
 * document equals the server's byte for byte, and a server-rejected action
 * visibly rolls back.
 */

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionApi } from "../src/api.js";
import { LightSlider } from "../src/lightSlider.js";
import { mapInput } from "../src/mapInput.js";
import { OptimisticStore } from "../src/optimistic.js";
import type { MappedAction, SceneDoc } from "../src/types.js";

const PORT = 18741;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;

async function waitForServer(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/healthz`);
      if (resp.ok) return;
    } catch {
      // still starting
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("server did not come up in time");
}

beforeAll(async () => {
  const work = mkdtempSync(join(tmpdir(), "canvas3d-ui-"));
  const indexDir = join(work, "index");
  const built = spawnSync("python3", ["-m", "canvas3d.cli", "demo-index",
                                      "-o", indexDir]);
  if (built.status !== 0) {
    throw new Error(`demo-index failed: ${built.stderr}`);
  }
  server = spawn("python3", ["-m", "canvas3d.cli", "serve",
                             "--port", String(PORT), "--index", indexDir,
                             "--sessions", join(work, "sessions")],
                 { stdio: "ignore" });
  await waitForServer();
}, 30000);

afterAll(() => {
  server?.kill();
});

describe("live server contract", () => {
  it("scripted sequence converges to byte-identical documents", async () => {
    const api = new SessionApi(BASE);
    const { id, scene } = await api.createSession(
      "a table with a mug and a lamp", 5);
    const rejections: string[] = [];
    const store = new OptimisticStore(api, id, scene as SceneDoc, {
      onRejection: (_a: MappedAction, reason) => rejections.push(reason.error),
    });

    // drag the table (LMB), rotate it (RMB), reset it (MMB)
    const drag = mapInput({ device: "mouse", button: "left",
                            dragDelta: [24, -6], hoverTarget: "table" },
                          store.localDocument());
    expect(drag).not.toBeNull();
    store.submit(drag!);

    const rotate = mapInput({ device: "mouse", button: "right",
                              dragDelta: [40, 0], hoverTarget: "mug" },
                            store.localDocument());
    expect(rotate).not.toBeNull();
    store.submit(rotate!);

    const reset = mapInput({ device: "mouse", button: "middle",
                             hoverTarget: "table" }, store.localDocument());
    expect(reset).not.toBeNull();
    store.submit(reset!);

    // slider stream over the lamp's light (hover + RMB hold)
    const slider = new LightSlider(store, 0);
    slider.setValue("lamp-light", 0.35);

    // camera flight keys
    for (const key of ["w", "q"]) {
      const move = mapInput({ device: "keyboard", key }, store.localDocument());
      store.submit(move!);
    }

    await store.flush();
    expect(rejections).toHaveLength(0);
    expect(store.pending).toHaveLength(0);

    const serverText = await api.getSceneText(id);
    expect(store.localText()).toBe(serverText);
    const confirmed = store.confirmedDocument();
    expect(confirmed.lights.find((l) => l.id === "lamp-light")!.intensity)
      .toBeCloseTo(0.35, 9);
  }, 30000);

  it("a server-rejected action visibly rolls back", async () => {
    const api = new SessionApi(BASE);
    const { id, scene } = await api.createSession("a table", 6);
    const rejections: string[] = [];
    const store = new OptimisticStore(api, id, scene as SceneDoc, {
      onRejection: (_a, reason) => rejections.push(reason.error),
    });

    // bypass the client-side affordance filter (simulates a stale client):
    // the desk only rotates about yaw, so pitch must bounce with a 409
    store.submit({ target: "table",
                   action: { type: "rotate", axis: "pitch", degrees: 20 } });
    // optimistically visible right now...
    expect(store.localDocument().objects[0].transform.rotation.pitch)
      .toBeCloseTo(20, 9);
    await store.flush();
    // ...and rolled back after the server refuses
    expect(rejections).toEqual(["DisallowedDegreeOfFreedomError"]);
    expect(store.localDocument().objects[0].transform.rotation.pitch).toBe(0);
    expect(store.localText()).toBe(await api.getSceneText(id));
    expect(store.localVersion()).toBe(store.serverVersion());
  }, 30000);

  it("meshes are fetched once per asset id and cached", async () => {
    const api = new SessionApi(BASE);
    const { scene } = await api.createSession("a table", 7);
    const ref = (scene as SceneDoc).objects[0].mesh_ref;
    const first = await api.getMesh(ref);
    expect(first.startsWith("v ")).toBe(true);
    const again = await api.getMesh(ref);
    expect(again).toBe(first); // served from the cache (same instance)
  }, 30000);
});
