/**
 * Optimistic scene store: apply locally at once, confirm with the server.
 *
 * The server stays authoritative: every confirmed response replaces the
 * base snapshot and the remaining queue is re-applied on top.  A 409 drops
 * the rejected action (the viewport snaps back to the server's state) and
 * a transport failure rolls the whole queue back.
 *
 * Invariants: the queue drains to empty after confirmation or rollback,
 * and the local version never exceeds server version + pending count.
 */

import { SessionApi } from "./api.js";
import { dumpsCanonical } from "./canonical.js";
import { applyLocal } from "./localApply.js";
import type { MappedAction, SceneDoc } from "./types.js";

export interface StoreCallbacks {
  /** any state change the viewport should repaint for */
  onChange?: () => void;
  /** a server-side affordance rejection (the optimistic edit was undone) */
  onRejection?: (action: MappedAction, reason: { error: string; message: string }) => void;
  /** transport failure: every pending action was rolled back */
  onError?: (message: string) => void;
}

export class OptimisticStore {
  pending: MappedAction[] = [];
  selectedObject: string | null = null;
  hoverTarget: string | null = null;
  sliderVisible = false;

  private serverDoc: SceneDoc;
  private inFlight = false;
  private drainResolvers: Array<() => void> = [];

  constructor(private api: SessionApi, readonly sessionId: string,
              initialScene: SceneDoc,
              private callbacks: StoreCallbacks = {}) {
    this.serverDoc = initialScene;
  }

  /** Last server-confirmed document. */
  confirmedDocument(): SceneDoc {
    return this.serverDoc;
  }

  serverVersion(): number {
    return this.serverDoc.version;
  }

  /** Confirmed document plus every pending action applied in order. */
  localDocument(): SceneDoc {
    let doc = this.serverDoc;
    for (const entry of this.pending) {
      doc = applyLocal(doc, entry.target, entry.action);
    }
    return doc;
  }

  localVersion(): number {
    return this.localDocument().version;
  }

  /** Canonical serialization of the local document (byte-comparable). */
  localText(): string {
    return dumpsCanonical(this.localDocument());
  }

  /** Optimistically apply and queue one action for the server. */
  submit(action: MappedAction): void {
    this.pending.push(action);
    this.callbacks.onChange?.();
    void this.pump();
  }

  /** Resolves once the pending queue has fully drained (or rolled back). */
  flush(): Promise<void> {
    if (this.pending.length === 0 && !this.inFlight) return Promise.resolve();
    return new Promise((resolve) => this.drainResolvers.push(resolve));
  }

  private settleIfDrained(): void {
    if (this.pending.length === 0 && !this.inFlight) {
      const resolvers = this.drainResolvers;
      this.drainResolvers = [];
      resolvers.forEach((r) => r());
    }
  }

  private async pump(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      while (this.pending.length > 0) {
        const entry = this.pending[0];
        let result;
        try {
          result = await this.api.postAction(this.sessionId, entry.target,
                                             entry.action);
        } catch (err) {
          // transport failure: roll every optimistic edit back
          this.pending = [];
          this.callbacks.onError?.(String(err));
          this.callbacks.onChange?.();
          return;
        }
        if (result.ok && result.sceneText !== undefined) {
          this.serverDoc = JSON.parse(result.sceneText) as SceneDoc;
          this.pending.shift();
        } else {
          // rejected: drop the action; the local view snaps back to the
          // confirmed snapshot plus whatever is still queued
          this.pending.shift();
          this.callbacks.onRejection?.(entry,
            result.error ?? { error: "Rejected", message: "rejected" });
        }
        this.callbacks.onChange?.();
      }
    } finally {
      this.inFlight = false;
      this.settleIfDrained();
      if (this.pending.length > 0) void this.pump();
    }
  }
}
