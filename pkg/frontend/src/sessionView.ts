/** Pure session view: the render state is a fold over the server event log
 * plus one local bit (a turn is in flight after we post input). Lines render
 * only from server events; there is no optimistic echo. */

import { LineRecord, PlayEvent } from "./types.js";

export type ConnectionState = "connecting" | "open" | "reconnecting" | "closed";

export interface Toast {
  eventId: number;
  scene: string;
  event: string;
}

export interface SceneTransition {
  afterLineIndex: number;
  scene: string;
  next: string | null;
}

export interface ErrorBanner {
  eventId: number;
  code: string;
  message: string;
  dismissed: boolean;
}

export interface SessionView {
  sessionId: string;
  lines: LineRecord[];
  lastEventId: number;
  /** True when the server's newest phase-bearing event is a pause. */
  awaitingInput: boolean;
  /** Local: set when input is posted, cleared by pause/error/finished. */
  turnInFlight: boolean;
  finished: boolean;
  toasts: Toast[];
  transitions: SceneTransition[];
  errors: ErrorBanner[];
  connection: ConnectionState;
}

export function newSessionView(sessionId: string): SessionView {
  return {
    sessionId,
    lines: [],
    lastEventId: 0,
    awaitingInput: false,
    turnInFlight: false,
    finished: false,
    toasts: [],
    transitions: [],
    errors: [],
    connection: "connecting",
  };
}

/** The composer is enabled exactly at pauses, while no turn is in flight. */
export function composerEnabled(view: SessionView): boolean {
  return view.awaitingInput && !view.turnInFlight && !view.finished;
}

export function applyEvent(view: SessionView, event: PlayEvent): SessionView {
  if (event.id <= view.lastEventId) {
    return view; // replayed duplicate after a reconnect
  }
  const next: SessionView = { ...view, lastEventId: event.id };
  switch (event.event) {
    case "line": {
      const line = event.data as unknown as LineRecord;
      if (line.index !== next.lines.length) {
        // Render list stays index-consistent with the LineAdded events.
        return next;
      }
      next.lines = [...next.lines, line];
      next.awaitingInput = false;
      break;
    }
    case "pause":
      next.awaitingInput = true;
      next.turnInFlight = false;
      break;
    case "event_triggered":
      next.toasts = [
        ...next.toasts,
        {
          eventId: event.id,
          scene: String(event.data.scene ?? ""),
          event: String(event.data.event ?? ""),
        },
      ];
      break;
    case "scene_ended":
      next.transitions = [
        ...next.transitions,
        {
          afterLineIndex: next.lines.length - 1,
          scene: String(event.data.scene ?? ""),
          next: (event.data.next as string | null) ?? null,
        },
      ];
      break;
    case "finished":
      next.finished = true;
      next.awaitingInput = false;
      next.turnInFlight = false;
      break;
    case "error":
      next.errors = [
        ...next.errors,
        {
          eventId: event.id,
          code: String(event.data.code ?? "error"),
          message: String(event.data.message ?? ""),
          dismissed: false,
        },
      ];
      // The aborted turn is over; the composer reopens only if the server
      // was still at a pause (no line committed since).
      next.turnInFlight = false;
      break;
  }
  return next;
}

export function applyEvents(view: SessionView, events: PlayEvent[]): SessionView {
  return events.reduce(applyEvent, view);
}

export function markTurnInFlight(view: SessionView): SessionView {
  return { ...view, turnInFlight: true };
}

export function setConnection(view: SessionView, state: ConnectionState): SessionView {
  return { ...view, connection: state };
}

export function dismissError(view: SessionView, eventId: number): SessionView {
  return {
    ...view,
    errors: view.errors.map((banner) =>
      banner.eventId === eventId ? { ...banner, dismissed: true } : banner,
    ),
  };
}
