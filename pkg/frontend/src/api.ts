/** Typed client for the composition server's HTTP API. */

import type { Action, SceneDoc } from "./types.js";

export interface ActionResult {
  ok: boolean;
  status: number;
  /** canonical scene bytes on success */
  sceneText?: string;
  /** rejection kind + message on 409 */
  error?: { error: string; message: string };
}

export interface ImageEntry {
  url: string;
  metadata: Record<string, unknown>;
  liked: boolean;
}

export class SessionApi {
  private meshCache = new Map<string, string>();

  constructor(readonly baseUrl: string,
              private fetchFn: typeof fetch = fetch) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(prompt: string, seed = 0):
      Promise<{ id: string; scene: SceneDoc }> {
    const resp = await this.fetchFn(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ prompt, seed }),
    });
    if (!resp.ok) throw new Error(`createSession failed: ${resp.status}`);
    return (await resp.json()) as { id: string; scene: SceneDoc };
  }

  /** Raw canonical scene document text (byte-comparable). */
  async getSceneText(sessionId: string): Promise<string> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/scene`));
    if (!resp.ok) throw new Error(`getScene failed: ${resp.status}`);
    return await resp.text();
  }

  async postAction(sessionId: string, target: string,
                   action: Action): Promise<ActionResult> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/actions`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ target, action }),
    });
    if (resp.status === 409) {
      return { ok: false, status: 409,
               error: (await resp.json()) as ActionResult["error"] };
    }
    if (!resp.ok) throw new Error(`postAction failed: ${resp.status}`);
    return { ok: true, status: resp.status, sceneText: await resp.text() };
  }

  async addObjectByPrompt(sessionId: string, prompt: string):
      Promise<{ id: string; scene: SceneDoc }> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/objects`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ prompt }),
    });
    if (!resp.ok) throw new Error(`addObject failed: ${resp.status}`);
    return (await resp.json()) as { id: string; scene: SceneDoc };
  }

  async uploadMesh(sessionId: string, objBytes: string, category: string):
      Promise<{ id: string; scene: SceneDoc }> {
    const query = `?category=${encodeURIComponent(category)}&format=obj`;
    const resp = await this.fetchFn(
      this.url(`/sessions/${sessionId}/objects${query}`), {
        method: "POST",
        headers: { "content-type": "text/plain" },
        body: objBytes,
      });
    if (!resp.ok) throw new Error(`uploadMesh failed: ${resp.status}`);
    return (await resp.json()) as { id: string; scene: SceneDoc };
  }

  async encode(sessionId: string, kinds: string[]):
      Promise<Record<string, string>> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/encode`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ kinds }),
    });
    if (!resp.ok) throw new Error(`encode failed: ${resp.status}`);
    return ((await resp.json()) as { files: Record<string, string> }).files;
  }

  async generate(sessionId: string, model: string, conditions: string[],
                 prompt?: string, seed?: number):
      Promise<{ url: string; latency: number; index: number }> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/generate`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ model, conditions, prompt, seed }),
    });
    if (!resp.ok) throw new Error(`generate failed: ${resp.status}`);
    return (await resp.json()) as { url: string; latency: number; index: number };
  }

  async listImages(sessionId: string): Promise<ImageEntry[]> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/images`));
    if (!resp.ok) throw new Error(`listImages failed: ${resp.status}`);
    return (await resp.json()) as ImageEntry[];
  }

  async likeImage(sessionId: string, index: number, liked = true): Promise<boolean> {
    const resp = await this.fetchFn(
      this.url(`/sessions/${sessionId}/images/${index}/like`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ liked }),
      });
    if (!resp.ok) throw new Error(`likeImage failed: ${resp.status}`);
    return ((await resp.json()) as { liked: boolean }).liked;
  }

  /** Asset geometry, fetched once per asset id and cached. */
  async getMesh(assetId: string): Promise<string> {
    const cached = this.meshCache.get(assetId);
    if (cached !== undefined) return cached;
    const resp = await this.fetchFn(this.url(`/meshes/${assetId}`));
    if (!resp.ok) throw new Error(`getMesh failed: ${resp.status}`);
    const text = await resp.text();
    this.meshCache.set(assetId, text);
    return text;
  }
}
