/** Client mirror of the schema validation rules.
 *
 * Produces the same diagnostic codes and structural paths as the service's
 * 400 response, so the author pane can mark problems inline without a
 * round-trip. Codes, severities, and paths are contract; message wording
 * is free. "$" is the document root. */

import { Diagnostic, SchemaDoc } from "./types.js";

export const ROOT_PATH = "$";
const NARRATOR = "NARRATOR";

type Json = null | boolean | number | string | Json[] | { [key: string]: Json };

function error(code: string, path: string, message: string): Diagnostic {
  return { severity: "error", code, path, message };
}

function warning(code: string, path: string, message: string): Diagnostic {
  return { severity: "warning", code, path, message };
}

/** First duplicate object key in a JSON text, or null. JSON.parse silently
 * keeps the last duplicate, so this needs its own scan. */
export function findDuplicateKey(text: string): string | null {
  const keyStack: Array<Set<string> | null> = [];
  let i = 0;
  let expectKey = false;

  const readString = (): string => {
    // positioned at the opening quote
    let out = "";
    i++;
    while (i < text.length) {
      const ch = text[i];
      if (ch === "\\") {
        out += text[i + 1] ?? "";
        i += 2;
        continue;
      }
      if (ch === '"') {
        i++;
        return out;
      }
      out += ch;
      i++;
    }
    return out;
  };

  while (i < text.length) {
    const ch = text[i];
    if (ch === '"') {
      const value = readString();
      if (expectKey) {
        const keys = keyStack[keyStack.length - 1];
        if (keys) {
          if (keys.has(value)) return value;
          keys.add(value);
        }
        expectKey = false;
      }
      continue;
    }
    if (ch === "{") {
      keyStack.push(new Set());
      expectKey = true;
    } else if (ch === "}") {
      keyStack.pop();
      expectKey = false;
    } else if (ch === "[") {
      keyStack.push(null);
      expectKey = false;
    } else if (ch === "]") {
      keyStack.pop();
    } else if (ch === ",") {
      expectKey = keyStack[keyStack.length - 1] instanceof Set;
    }
    i++;
  }
  return null;
}

interface Ctx {
  diagnostics: Diagnostic[];
}

function fieldPath(parent: string, key: string): string {
  return parent === ROOT_PATH ? key : `${parent}.${key}`;
}

function require(
  ctx: Ctx,
  obj: Record<string, Json>,
  key: string,
  kind: "string" | "boolean" | "integer" | "array" | "object",
  path: string,
): Json | undefined {
  if (!(key in obj)) {
    ctx.diagnostics.push(
      error("missing-field", fieldPath(path, key), `required field '${key}' is missing`),
    );
    return undefined;
  }
  const value = obj[key];
  const ok =
    kind === "string"
      ? typeof value === "string"
      : kind === "boolean"
        ? typeof value === "boolean"
        : kind === "integer"
          ? typeof value === "number" && Number.isInteger(value)
          : kind === "array"
            ? Array.isArray(value)
            : typeof value === "object" && value !== null && !Array.isArray(value);
  if (!ok) {
    ctx.diagnostics.push(
      error("wrong-type", fieldPath(path, key), `field '${key}' must be ${kind}`),
    );
    return undefined;
  }
  return value;
}

/** Format-level checks: shape, required fields, condition encoding. */
export function parseDocument(text: string): {
  doc: SchemaDoc | null;
  diagnostics: Diagnostic[];
} {
  let data: Json;
  try {
    data = JSON.parse(text) as Json;
  } catch (exc) {
    return {
      doc: null,
      diagnostics: [error("syntax", ROOT_PATH, `invalid JSON: ${String(exc)}`)],
    };
  }
  const duplicate = findDuplicateKey(text);
  if (duplicate !== null) {
    return {
      doc: null,
      diagnostics: [error("duplicate-key", ROOT_PATH, `duplicate object key '${duplicate}'`)],
    };
  }
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    return {
      doc: null,
      diagnostics: [error("syntax", ROOT_PATH, "document root must be a JSON object")],
    };
  }

  const ctx: Ctx = { diagnostics: [] };
  const root = data as Record<string, Json>;
  require(ctx, root, "title", "string", ROOT_PATH);
  require(ctx, root, "style", "string", ROOT_PATH);

  const characters = require(ctx, root, "characters", "array", ROOT_PATH);
  if (Array.isArray(characters)) {
    characters.forEach((entry, i) => {
      const path = `characters[${i}]`;
      if (typeof entry !== "object" || entry === null || Array.isArray(entry)) {
        ctx.diagnostics.push(error("wrong-type", path, "character entries must be objects"));
        return;
      }
      const item = entry as Record<string, Json>;
      require(ctx, item, "name", "string", path);
      require(ctx, item, "description", "string", path);
    });
  }

  const scenes = require(ctx, root, "scenes", "array", ROOT_PATH);
  if (Array.isArray(scenes)) {
    scenes.forEach((entry, i) => {
      const path = `scenes[${i}]`;
      if (typeof entry !== "object" || entry === null || Array.isArray(entry)) {
        ctx.diagnostics.push(error("wrong-type", path, "scene entries must be objects"));
        return;
      }
      const scene = entry as Record<string, Json>;
      require(ctx, scene, "name", "string", path);
      const names = require(ctx, scene, "characters", "array", path);
      if (Array.isArray(names)) {
        names.forEach((name, j) => {
          if (typeof name !== "string") {
            ctx.diagnostics.push(
              error("wrong-type", `${path}.characters[${j}]`,
                    "scene character entries must be name strings"),
            );
          }
        });
      }
      require(ctx, scene, "setting", "string", path);
      require(ctx, scene, "opening_line", "string", path);
      const events = require(ctx, scene, "events", "array", path);
      if (Array.isArray(events)) {
        events.forEach((rawEvent, j) => {
          const eventPath = `${path}.events[${j}]`;
          if (typeof rawEvent !== "object" || rawEvent === null || Array.isArray(rawEvent)) {
            ctx.diagnostics.push(error("wrong-type", eventPath, "event entries must be objects"));
            return;
          }
          const event = rawEvent as Record<string, Json>;
          require(ctx, event, "id", "string", eventPath);
          const hasWhen = "when" in event;
          const hasCount = "after_lines" in event;
          if (hasWhen && hasCount) {
            ctx.diagnostics.push(
              error("condition-ambiguous", eventPath,
                    "exactly one of 'when' / 'after_lines' is allowed, not both"),
            );
          } else if (!hasWhen && !hasCount) {
            ctx.diagnostics.push(
              error("condition-missing", eventPath,
                    "event needs a condition: either 'when' or 'after_lines'"),
            );
          } else if (hasWhen) {
            require(ctx, event, "when", "string", eventPath);
          } else {
            require(ctx, event, "after_lines", "integer", eventPath);
          }
          const outcome = require(ctx, event, "outcome", "object", eventPath);
          if (outcome && typeof outcome === "object" && !Array.isArray(outcome)) {
            const out = outcome as Record<string, Json>;
            require(ctx, out, "description", "string", `${eventPath}.outcome`);
            require(ctx, out, "ends_scene", "boolean", `${eventPath}.outcome`);
            if ("transition_to" in out) {
              require(ctx, out, "transition_to", "string", `${eventPath}.outcome`);
            }
          }
        });
      }
    });
  }

  if (ctx.diagnostics.length) {
    return { doc: null, diagnostics: ctx.diagnostics };
  }
  return { doc: data as unknown as SchemaDoc, diagnostics: [] };
}

/** Semantic invariants over a well-formed document. */
export function validateSchema(doc: SchemaDoc): Diagnostic[] {
  const diags: Diagnostic[] = [];

  if (doc.characters.length === 0) {
    diags.push(error("no-characters", "characters", "at least one character is required"));
  }
  if (doc.scenes.length === 0) {
    diags.push(error("no-scenes", "scenes", "at least one scene is required"));
  }

  const seenNames = new Set<string>();
  doc.characters.forEach((character, i) => {
    const path = `characters[${i}]`;
    if (!character.name.trim()) {
      diags.push(error("empty-name", `${path}.name`, "character name must be non-empty"));
    }
    if (character.name.includes("\n")) {
      diags.push(error("name-has-newline", `${path}.name`,
                       "character name must not contain newlines"));
    }
    if (character.name.includes(":")) {
      diags.push(error("name-has-colon", `${path}.name`,
                       "character name must not contain ':' (reserved speaker delimiter)"));
    }
    if (character.name === NARRATOR) {
      diags.push(error("reserved-name", `${path}.name`,
                       `'${NARRATOR}' is reserved for pure narration lines`));
    }
    if (!character.description.trim()) {
      diags.push(error("empty-description", `${path}.description`,
                       "character description must be non-empty"));
    }
    if (seenNames.has(character.name)) {
      diags.push(error("duplicate-character", `${path}.name`,
                       `character name '${character.name}' is already defined`));
    }
    seenNames.add(character.name);
  });

  const schemaNames = new Set(doc.characters.map((c) => c.name));
  const sceneIds = new Set<string>();
  const allSceneIds = new Set(doc.scenes.map((s) => s.name));
  doc.scenes.forEach((scene, i) => {
    const path = `scenes[${i}]`;
    if (sceneIds.has(scene.name)) {
      diags.push(error("duplicate-scene", `${path}.name`,
                       `scene name '${scene.name}' is already used`));
    }
    sceneIds.add(scene.name);
    if (!scene.opening_line) {
      diags.push(error("empty-opening-line", `${path}.opening_line`,
                       "scene opening line must be non-empty"));
    }
    for (const name of scene.characters) {
      if (!schemaNames.has(name)) {
        diags.push(error("unknown-character", `${path}.characters`,
                         `scene lists '${name}', which is not a schema character`));
      }
    }
    if (scene.events.length === 0) {
      diags.push(error("no-events", `${path}.events`, "scene needs at least one event"));
    }
    const eventIds = new Set<string>();
    let endable = false;
    scene.events.forEach((event, j) => {
      const eventPath = `${path}.events[${j}]`;
      if (eventIds.has(event.id)) {
        diags.push(error("duplicate-event", `${eventPath}.id`,
                         `event id '${event.id}' is already used in this scene`));
      }
      eventIds.add(event.id);
      if (event.when !== undefined) {
        if (!event.when.trim()) {
          diags.push(error("empty-condition", `${eventPath}.when`,
                           "condition statement must be non-empty"));
        } else {
          const lowered = event.when.toLowerCase();
          const present = scene.characters.some((n) => lowered.includes(n.toLowerCase()));
          if (!present) {
            const absent = doc.characters
              .map((c) => c.name)
              .filter((n) => !scene.characters.includes(n) && lowered.includes(n.toLowerCase()))
              .sort();
            const suffix = absent.length ? ` (mentions absent: ${absent.join(", ")})` : "";
            diags.push(warning("condition-no-scene-character", `${eventPath}.when`,
                               `condition mentions no scene character${suffix}`));
          }
        }
      } else if (event.after_lines !== undefined && event.after_lines < 1) {
        diags.push(error("invalid-line-count", `${eventPath}.after_lines`,
                         "after_lines must be a positive integer"));
      }
      if (event.outcome.ends_scene) endable = true;
      if (event.outcome.transition_to !== undefined) {
        const outPath = `${eventPath}.outcome.transition_to`;
        if (!event.outcome.ends_scene) {
          diags.push(error("transition-without-end", outPath,
                           "transition_to requires ends_scene=true"));
        }
        if (!allSceneIds.has(event.outcome.transition_to)) {
          diags.push(error("transition-unknown-scene", outPath,
                           `no scene named '${event.outcome.transition_to}'`));
        }
      }
    });
    if (scene.events.length > 0 && !endable) {
      diags.push(error("scene-never-ends", `${path}.events`,
                       "no event ends the scene, so the playthrough could never leave it"));
    }
  });

  for (const i of unreachableScenes(doc)) {
    diags.push(warning("unreachable-scene", `scenes[${i}]`,
                       `scene '${doc.scenes[i].name}' is never reached from the opening scene`));
  }

  diags.sort((a, b) =>
    a.path < b.path ? -1 : a.path > b.path ? 1 : a.code < b.code ? -1 : a.code > b.code ? 1 : 0,
  );
  return diags;
}

function unreachableScenes(doc: SchemaDoc): number[] {
  if (doc.scenes.length === 0) return [];
  const indexOf = new Map(doc.scenes.map((scene, i) => [scene.name, i] as const));
  const visited = new Set<number>([0]);
  const frontier = [0];
  while (frontier.length) {
    const current = frontier.shift()!;
    for (const event of doc.scenes[current].events) {
      const target = event.outcome.transition_to;
      if (target !== undefined && indexOf.has(target)) {
        const idx = indexOf.get(target)!;
        if (!visited.has(idx)) {
          visited.add(idx);
          frontier.push(idx);
        }
      }
    }
  }
  return doc.scenes.map((_, i) => i).filter((i) => !visited.has(i));
}

/** Parse plus validate; never throws. */
export function checkDocument(text: string): {
  doc: SchemaDoc | null;
  diagnostics: Diagnostic[];
} {
  const parsed = parseDocument(text);
  if (parsed.doc === null) return parsed;
  return { doc: parsed.doc, diagnostics: validateSchema(parsed.doc) };
}

export function hasErrors(diagnostics: Diagnostic[]): boolean {
  return diagnostics.some((d) => d.severity === "error");
}
