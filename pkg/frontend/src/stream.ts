/** Server-sent-events client over fetch with loss-free reconnection.
 *
 * The parser is incremental (frames may arrive split across chunks) and the
 * reconnect loop resends the highest event id seen as Last-Event-ID, so the
 * server replays exactly the missed suffix. */

import { PlayEvent, PlayEventName } from "./types.js";

export class SseParser {
  private buffer = "";

  /** Feed a text chunk; returns the complete events it finished. */
  push(chunk: string): PlayEvent[] {
    this.buffer += chunk.replace(/\r\n/g, "\n");
    const events: PlayEvent[] = [];
    let cut: number;
    while ((cut = this.buffer.indexOf("\n\n")) !== -1) {
      const frame = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      const event = parseFrame(frame);
      if (event) events.push(event);
    }
    return events;
  }
}

function parseFrame(frame: string): PlayEvent | null {
  let id = 0;
  let name = "";
  const dataLines: string[] = [];
  for (const raw of frame.split("\n")) {
    if (raw.startsWith("id:")) id = Number(raw.slice(3).trim());
    else if (raw.startsWith("event:")) name = raw.slice(6).trim();
    else if (raw.startsWith("data:")) dataLines.push(raw.slice(5).trimStart());
  }
  if (!name || !Number.isFinite(id)) return null;
  let data: Record<string, unknown> = {};
  if (dataLines.length) {
    try {
      data = JSON.parse(dataLines.join("\n"));
    } catch {
      return null;
    }
  }
  return { id, event: name as PlayEventName, data };
}

export interface StreamHandlers {
  onEvent: (event: PlayEvent) => void;
  onConnectionChange?: (state: "connecting" | "open" | "reconnecting" | "closed") => void;
}

export interface StreamOptions {
  lastEventId?: number;
  fetchImpl?: typeof fetch;
  /** Delay between reconnect attempts, ms. */
  retryDelayMs?: number;
  /** Stop after this many consecutive failed connects (0 = forever). */
  maxRetries?: number;
}

/** Consume one session's event stream; resolves when stopped or given up. */
export class EventStream {
  private stopped = false;
  private lastEventId: number;
  private controller: AbortController | null = null;
  private readonly fetchImpl: typeof fetch;
  private readonly retryDelayMs: number;
  private readonly maxRetries: number;

  constructor(
    private readonly url: string,
    private readonly handlers: StreamHandlers,
    options: StreamOptions = {},
  ) {
    this.lastEventId = options.lastEventId ?? 0;
    this.fetchImpl = options.fetchImpl ?? fetch;
    this.retryDelayMs = options.retryDelayMs ?? 1000;
    this.maxRetries = options.maxRetries ?? 0;
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  async run(): Promise<void> {
    let failures = 0;
    this.handlers.onConnectionChange?.("connecting");
    while (!this.stopped) {
      try {
        this.controller = new AbortController();
        const response = await this.fetchImpl(this.url, {
          headers: { "Last-Event-ID": String(this.lastEventId) },
          signal: this.controller.signal,
        });
        if (response.status === 404) {
          this.handlers.onConnectionChange?.("closed");
          return;
        }
        if (!response.ok || !response.body) {
          throw new Error(`stream request failed: ${response.status}`);
        }
        failures = 0;
        this.handlers.onConnectionChange?.("open");
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        while (!this.stopped) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const event of parser.push(decoder.decode(value, { stream: true }))) {
            if (event.id > this.lastEventId) {
              this.lastEventId = event.id;
              this.handlers.onEvent(event);
            }
          }
        }
        reader.cancel().catch(() => undefined);
      } catch {
        failures += 1;
        if (this.maxRetries && failures >= this.maxRetries) {
          this.handlers.onConnectionChange?.("closed");
          return;
        }
      }
      if (!this.stopped) {
        this.handlers.onConnectionChange?.("reconnecting");
        await sleep(this.retryDelayMs);
      }
    }
    this.handlers.onConnectionChange?.("closed");
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
