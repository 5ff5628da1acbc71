/** Wire types mirroring the service API and schema document format. */

export interface LineRecord {
  index: number;
  scene: string;
  kind: "opening" | "generated" | "player";
  speaker: string;
  narration: string | null;
  actions: string | null;
  dialogue: string | null;
  pause: boolean;
}

export type PlayEventName =
  | "line"
  | "pause"
  | "event_triggered"
  | "scene_ended"
  | "finished"
  | "error";

export interface PlayEvent {
  id: number;
  event: PlayEventName;
  data: Record<string, unknown>;
}

export type Severity = "error" | "warning";

export interface Diagnostic {
  severity: Severity;
  code: string;
  message: string;
  path: string;
}

export interface CharacterDoc {
  name: string;
  description: string;
}

export interface OutcomeDoc {
  description: string;
  ends_scene: boolean;
  transition_to?: string;
}

export interface EventDoc {
  id: string;
  when?: string;
  after_lines?: number;
  outcome: OutcomeDoc;
}

export interface SceneDoc {
  name: string;
  characters: string[];
  setting: string;
  opening_line: string;
  events: EventDoc[];
}

export interface SchemaDoc {
  title: string;
  style: string;
  characters: CharacterDoc[];
  scenes: SceneDoc[];
}

export const NARRATOR = "NARRATOR";

/** Canonical "<narration> <Speaker>: (<actions>) <dialogue>" rendering. */
export function renderLine(line: LineRecord): string {
  const parts: string[] = [];
  if (line.narration) parts.push(line.narration);
  if (line.speaker !== NARRATOR && (line.actions || line.dialogue)) {
    let spoken = `${line.speaker}:`;
    if (line.actions) spoken += ` (${line.actions})`;
    if (line.dialogue) spoken += ` ${line.dialogue}`;
    parts.push(spoken);
  }
  return parts.join(" ");
}
