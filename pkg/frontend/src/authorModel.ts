/** Author-pane model: an editable mirror of the schema document.
 *
 * The form state IS the document (plus per-event condition-kind toggles);
 * diagnostics come from the client validator and attach to fields by
 * structural path. The first character is always the player character. */

import { Diagnostic, EventDoc, SchemaDoc } from "./types.js";
import { checkDocument } from "./validate.js";

export type ConditionKind = "when" | "after_lines";

export function emptySchema(): SchemaDoc {
  return {
    title: "Untitled Story",
    style: "",
    characters: [{ name: "Player", description: "the player character" }],
    scenes: [
      {
        name: "Scene 1",
        characters: ["Player"],
        setting: "",
        opening_line: "",
        events: [
          {
            id: "ending",
            after_lines: 12,
            outcome: { description: "the story wraps up", ends_scene: true },
          },
        ],
      },
    ],
  };
}

export function playerCharacterName(doc: SchemaDoc): string | null {
  return doc.characters.length ? doc.characters[0].name : null;
}

/** Drag-order support: move characters[from] to position to. */
export function moveCharacter(doc: SchemaDoc, from: number, to: number): SchemaDoc {
  if (from === to || from < 0 || from >= doc.characters.length) return doc;
  const characters = [...doc.characters];
  const [moved] = characters.splice(from, 1);
  characters.splice(Math.max(0, Math.min(to, characters.length)), 0, moved);
  return { ...doc, characters };
}

export function conditionKind(event: EventDoc): ConditionKind {
  return event.after_lines !== undefined ? "after_lines" : "when";
}

/** Toggle an event between predicate and line-count conditions. */
export function setConditionKind(event: EventDoc, kind: ConditionKind): EventDoc {
  if (kind === conditionKind(event)) return event;
  const next: EventDoc = { ...event };
  if (kind === "when") {
    delete next.after_lines;
    next.when = next.when ?? "";
  } else {
    delete next.when;
    next.after_lines = next.after_lines ?? 1;
  }
  return next;
}

export function serializeDocument(doc: SchemaDoc): string {
  return JSON.stringify(doc, null, 2);
}

export function diagnosticsFor(doc: SchemaDoc): Diagnostic[] {
  return checkDocument(serializeDocument(doc)).diagnostics;
}

/** Diagnostics anchored at exactly this path (for one field's inline slot). */
export function diagnosticsAt(diagnostics: Diagnostic[], path: string): Diagnostic[] {
  return diagnostics.filter((d) => d.path === path);
}

/** Diagnostics at or under a path (for section-level rollups). */
export function diagnosticsUnder(diagnostics: Diagnostic[], path: string): Diagnostic[] {
  return diagnostics.filter((d) => d.path === path || d.path.startsWith(path + ".")
    || d.path.startsWith(path + "["));
}
