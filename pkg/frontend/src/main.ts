/**
 * Browser entry: prompt dialog, interactive viewport, intensity slider,
 * and the generated-image library, all against the composition server.
 */

import { SessionApi } from "./api.js";
import { OptimisticStore } from "./optimistic.js";
import { Viewport } from "./viewport.js";
import type { SceneDoc } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.style.opacity = "1";
  setTimeout(() => { box.style.opacity = "0"; }, 2500);
}

async function refreshImages(api: SessionApi, sessionId: string): Promise<void> {
  const listing = await api.listImages(sessionId);
  const gallery = el<HTMLDivElement>("gallery");
  gallery.innerHTML = "";
  listing.forEach((entry, i) => {
    const card = document.createElement("div");
    card.className = "card";
    const img = document.createElement("img");
    img.src = entry.url;
    const like = document.createElement("button");
    like.textContent = entry.liked ? "liked" : "like";
    like.onclick = async () => {
      await api.likeImage(sessionId, i, !entry.liked);
      await refreshImages(api, sessionId);
    };
    card.append(img, like);
    gallery.append(card);
  });
}

async function boot(): Promise<void> {
  const api = new SessionApi("");
  let store: OptimisticStore | null = null;
  let viewport: Viewport | null = null;

  el<HTMLFormElement>("prompt-form").onsubmit = async (e) => {
    e.preventDefault();
    const prompt = el<HTMLInputElement>("prompt-input").value.trim();
    if (!prompt) return;
    const { id, scene } = await api.createSession(prompt);
    store = new OptimisticStore(api, id, scene as SceneDoc, {
      onChange: () => viewport?.draw(),
      onRejection: (_a, reason) => toast(`rejected: ${reason.message}`),
      onError: (message) => toast(`network error, rolled back: ${message}`),
    });
    viewport = new Viewport(el<HTMLCanvasElement>("canvas"), store);
    viewport.draw();
    el<HTMLButtonElement>("generate").disabled = false;
    el<HTMLButtonElement>("add-object").disabled = false;
  };

  el<HTMLInputElement>("slider").oninput = (e) => {
    const value = Number((e.target as HTMLInputElement).value) / 100;
    viewport?.setSliderValue(value);
  };

  el<HTMLButtonElement>("generate").onclick = async () => {
    if (!store) return;
    await store.flush();
    await api.generate(store.sessionId, "mock-backbone",
                       ["scene_image", "depth", "skeleton", "lighting"]);
    await refreshImages(api, store.sessionId);
  };

  el<HTMLButtonElement>("add-object").onclick = async () => {
    if (!store) return;
    const prompt = window.prompt("describe the object to add") ?? "";
    if (!prompt.trim()) return;
    try {
      await api.addObjectByPrompt(store.sessionId, prompt);
      const text = await api.getSceneText(store.sessionId);
      store = new OptimisticStore(api, store.sessionId,
                                  JSON.parse(text) as SceneDoc, {
        onChange: () => viewport?.draw(),
        onRejection: (_a, reason) => toast(`rejected: ${reason.message}`),
        onError: (message) => toast(`network error: ${message}`),
      });
      viewport = new Viewport(el<HTMLCanvasElement>("canvas"), store);
      viewport.draw();
    } catch (err) {
      toast(String(err));
    }
  };
}

boot().catch((err) => console.error(err));
