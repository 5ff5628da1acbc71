/** Glue for a live playthrough: event stream in, inputs out.
 *
 * Holds the canonical SessionView and notifies on every change. Lines come
 * only from server events (no optimistic echo), and the typed composer text
 * lives outside this controller, so reconnects never touch it. */

import { Api } from "./api.js";
import { ComposerState, composerIsEmpty, composerPayload } from "./composer.js";
import {
  SessionView,
  applyEvent,
  applyEvents,
  composerEnabled,
  markTurnInFlight,
  newSessionView,
  setConnection,
} from "./sessionView.js";
import { EventStream, StreamOptions } from "./stream.js";
import { PlayEvent } from "./types.js";

export class PlayerSession {
  view: SessionView;
  private stream: EventStream | null = null;
  private listeners = new Set<(view: SessionView) => void>();

  constructor(
    private readonly api: Api,
    sessionId: string,
    initialEvents: PlayEvent[] = [],
    private readonly streamOptions: StreamOptions = {},
  ) {
    this.view = applyEvents(newSessionView(sessionId), initialEvents);
  }

  onChange(listener: (view: SessionView) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private update(view: SessionView): void {
    this.view = view;
    for (const listener of this.listeners) listener(view);
  }

  start(): Promise<void> {
    this.stream = new EventStream(
      this.api.eventsUrl(this.view.sessionId),
      {
        onEvent: (event) => this.update(applyEvent(this.view, event)),
        onConnectionChange: (state) => this.update(setConnection(this.view, state)),
      },
      { ...this.streamOptions, lastEventId: this.view.lastEventId },
    );
    return this.stream.run();
  }

  stop(): void {
    this.stream?.stop();
  }

  canSubmit(composer: ComposerState): boolean {
    return composerEnabled(this.view) && !composerIsEmpty(composer);
  }

  /** Post the composer content; rejects empty input and out-of-turn sends. */
  async submit(composer: ComposerState): Promise<boolean> {
    if (!this.canSubmit(composer)) return false;
    this.update(markTurnInFlight(this.view));
    try {
      await this.api.postInput(this.view.sessionId, composerPayload(composer));
      return true;
    } catch (exc) {
      // The turn never started; reopen the composer and surface the failure.
      this.update({
        ...this.view,
        turnInFlight: false,
        errors: [
          ...this.view.errors,
          {
            eventId: -Date.now(),
            code: "request-failed",
            message: String(exc),
            dismissed: false,
          },
        ],
      });
      return false;
    }
  }
}
