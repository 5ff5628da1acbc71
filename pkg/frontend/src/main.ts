/** DOM wiring: player/author tabs over the pure models. */

import { Api, ApiError } from "./api.js";
import {
  conditionKind,
  diagnosticsAt,
  diagnosticsFor,
  emptySchema,
  moveCharacter,
  playerCharacterName,
  serializeDocument,
  setConditionKind,
} from "./authorModel.js";
import { ComposerState, composerIsEmpty, emptyComposer, serializeComposer } from "./composer.js";
import { PlayerSession } from "./playerController.js";
import { SessionView, composerEnabled, dismissError } from "./sessionView.js";
import { Diagnostic, LineRecord, SchemaDoc } from "./types.js";
import { hasErrors } from "./validate.js";

const api = new Api("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function byId<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

// ---------------------------------------------------------------- player pane

let player: PlayerSession | null = null;
let composer: ComposerState = emptyComposer();

function renderLineElement(line: LineRecord): HTMLElement {
  const row = el("div", `line line-${line.kind}`);
  if (line.narration) {
    row.appendChild(el("span", "narration", line.narration));
    row.appendChild(document.createTextNode(" "));
  }
  if (line.speaker !== "NARRATOR" && (line.actions || line.dialogue)) {
    const spoken = el("span", "spoken");
    spoken.appendChild(el("span", "speaker", `${line.speaker}:`));
    if (line.actions) {
      spoken.appendChild(document.createTextNode(" "));
      spoken.appendChild(el("span", "actions", `(${line.actions})`));
    }
    if (line.dialogue) {
      spoken.appendChild(document.createTextNode(" "));
      spoken.appendChild(el("span", "dialogue", line.dialogue));
    }
    row.appendChild(spoken);
  }
  return row;
}

function renderPlayer(view: SessionView): void {
  const pane = byId<HTMLDivElement>("player-pane");
  pane.hidden = false;
  byId<HTMLSpanElement>("connection-state").textContent = view.connection;
  byId<HTMLSpanElement>("phase-indicator").textContent = view.finished
    ? "the playthrough has ended"
    : composerEnabled(view)
      ? "your move"
      : "the story is unfolding...";

  const transcript = byId<HTMLDivElement>("transcript");
  transcript.replaceChildren();
  const transitionsAt = new Map(view.transitions.map((t) => [t.afterLineIndex, t]));
  view.lines.forEach((line, index) => {
    transcript.appendChild(renderLineElement(line));
    const transition = transitionsAt.get(index);
    if (transition) {
      const label = transition.next
        ? `scene ends: ${transition.scene} -> ${transition.next}`
        : `scene ends: ${transition.scene}`;
      transcript.appendChild(el("div", "transition", `— ${label} —`));
    }
  });
  if (view.finished) {
    transcript.appendChild(el("div", "finished", "— the end —"));
  }
  transcript.scrollTop = transcript.scrollHeight;

  const toasts = byId<HTMLDivElement>("toasts");
  toasts.replaceChildren(
    ...view.toasts.slice(-4).map((toast) =>
      el("div", "toast", `event triggered: ${toast.event}`)),
  );

  const banners = byId<HTMLDivElement>("banners");
  banners.replaceChildren();
  for (const banner of view.errors.filter((b) => !b.dismissed)) {
    const node = el("div", "banner", `${banner.code}: ${banner.message} `);
    const dismiss = el("button", "dismiss", "dismiss");
    dismiss.onclick = () => {
      if (player) {
        player.view = dismissError(player.view, banner.eventId);
        renderPlayer(player.view);
      }
    };
    node.appendChild(dismiss);
    banners.appendChild(node);
  }

  const enabled = composerEnabled(view);
  byId<HTMLInputElement>("composer-actions").disabled = !enabled;
  byId<HTMLInputElement>("composer-dialogue").disabled = !enabled;
  byId<HTMLButtonElement>("composer-send").disabled =
    !enabled || composerIsEmpty(composer);
  byId<HTMLDivElement>("composer-preview").textContent =
    serializeComposer(composer) || "(type actions, dialogue, or both)";
}

async function openPlayer(schema: SchemaDoc): Promise<void> {
  try {
    const created = await api.createSession({ schema });
    player?.stop();
    player = new PlayerSession(api, created.sessionId, created.events);
    composer = emptyComposer();
    player.onChange(renderPlayer);
    renderPlayer(player.view);
    switchTab("player");
    void player.start();
  } catch (exc) {
    const message =
      exc instanceof ApiError
        ? `${exc.code}: ${exc.message}\n` +
          exc.diagnostics.map((d) => `${d.severity} ${d.code} ${d.path}`).join("\n")
        : String(exc);
    alert(`could not start the playthrough\n${message}`);
  }
}

function wireComposer(): void {
  const actions = byId<HTMLInputElement>("composer-actions");
  const dialogue = byId<HTMLInputElement>("composer-dialogue");
  const send = byId<HTMLButtonElement>("composer-send");
  const sync = () => {
    composer = { actions: actions.value, dialogue: dialogue.value };
    if (player) renderPlayer(player.view);
  };
  actions.oninput = sync;
  dialogue.oninput = sync;
  const submit = async () => {
    if (!player) return;
    if (await player.submit(composer)) {
      actions.value = "";
      dialogue.value = "";
      composer = emptyComposer();
    }
  };
  send.onclick = () => void submit();
  dialogue.onkeydown = (event) => {
    if (event.key === "Enter") void submit();
  };
}

// ---------------------------------------------------------------- author pane

let doc: SchemaDoc = emptySchema();

function field(
  labelText: string,
  value: string,
  path: string,
  diags: Diagnostic[],
  onInput: (value: string) => void,
  multiline = false,
): HTMLElement {
  const wrap = el("label", "field");
  wrap.appendChild(el("span", "field-label", labelText));
  const input = multiline ? el("textarea", "field-input") : el("input", "field-input");
  input.value = value;
  input.oninput = () => {
    onInput(input.value);
    refreshDiagnostics();
  };
  (input as HTMLElement).dataset.path = path;
  wrap.appendChild(input);
  wrap.appendChild(diagSlot(path, diags));
  return wrap;
}

function diagSlot(path: string, diags: Diagnostic[]): HTMLElement {
  const slot = el("div", "diagnostics");
  slot.dataset.diagPath = path;
  for (const diag of diagnosticsAt(diags, path)) {
    slot.appendChild(el("div", `diag diag-${diag.severity}`, `${diag.code}: ${diag.message}`));
  }
  return slot;
}

function refreshDiagnostics(): void {
  const diags = diagnosticsFor(doc);
  document.querySelectorAll<HTMLElement>("[data-diag-path]").forEach((slot) => {
    const path = slot.dataset.diagPath ?? "";
    slot.replaceChildren(
      ...diagnosticsAt(diags, path).map((diag) =>
        el("div", `diag diag-${diag.severity}`, `${diag.code}: ${diag.message}`)),
    );
  });
  byId<HTMLButtonElement>("author-play").disabled = hasErrors(diags);
  const badge = playerCharacterName(doc);
  byId<HTMLSpanElement>("player-badge").textContent = badge
    ? `player character: ${badge}`
    : "no characters yet";
}

function renderAuthor(): void {
  const pane = byId<HTMLDivElement>("author-form");
  const diags = diagnosticsFor(doc);
  pane.replaceChildren();

  pane.appendChild(field("Title", doc.title, "title", diags, (v) => (doc.title = v)));
  pane.appendChild(field("Style", doc.style, "style", diags, (v) => (doc.style = v), true));

  const charsHeader = el("h3", "", "Characters");
  pane.appendChild(charsHeader);
  pane.appendChild(diagSlot("characters", diags));
  doc.characters.forEach((character, i) => {
    const card = el("div", "card character-card");
    const head = el("div", "card-head",
                    i === 0 ? `#${i + 1} (player character)` : `#${i + 1}`);
    const up = el("button", "", "move up");
    up.onclick = () => {
      doc = moveCharacter(doc, i, i - 1);
      renderAuthor();
    };
    const down = el("button", "", "move down");
    down.onclick = () => {
      doc = moveCharacter(doc, i, i + 1);
      renderAuthor();
    };
    const remove = el("button", "", "remove");
    remove.onclick = () => {
      doc.characters.splice(i, 1);
      renderAuthor();
    };
    head.append(" ", up, down, remove);
    card.appendChild(head);
    card.appendChild(field("Name", character.name, `characters[${i}].name`, diags,
                           (v) => (character.name = v)));
    card.appendChild(field("Description", character.description,
                           `characters[${i}].description`, diags,
                           (v) => (character.description = v)));
    pane.appendChild(card);
  });
  const addCharacter = el("button", "", "add character");
  addCharacter.onclick = () => {
    doc.characters.push({ name: `Character ${doc.characters.length + 1}`, description: "" });
    renderAuthor();
  };
  pane.appendChild(addCharacter);

  pane.appendChild(el("h3", "", "Scenes"));
  pane.appendChild(diagSlot("scenes", diags));
  doc.scenes.forEach((scene, i) => {
    const scenePath = `scenes[${i}]`;
    const card = el("div", "card scene-card");
    const head = el("div", "card-head", `scene #${i + 1}`);
    const remove = el("button", "", "remove scene");
    remove.onclick = () => {
      doc.scenes.splice(i, 1);
      renderAuthor();
    };
    head.append(" ", remove);
    card.appendChild(head);
    card.appendChild(diagSlot(scenePath, diags));
    card.appendChild(field("Name", scene.name, `${scenePath}.name`, diags,
                           (v) => (scene.name = v)));
    card.appendChild(field("Setting", scene.setting, `${scenePath}.setting`, diags,
                           (v) => (scene.setting = v), true));
    card.appendChild(field("Opening line", scene.opening_line,
                           `${scenePath}.opening_line`, diags,
                           (v) => (scene.opening_line = v), true));

    const present = el("label", "field");
    present.appendChild(el("span", "field-label", "Characters present (comma-separated)"));
    const presentInput = el("input", "field-input");
    presentInput.value = scene.characters.join(", ");
    presentInput.oninput = () => {
      scene.characters = presentInput.value
        .split(",")
        .map((s) => s.trim())
        .filter(Boolean);
      refreshDiagnostics();
    };
    present.appendChild(presentInput);
    present.appendChild(diagSlot(`${scenePath}.characters`, diags));
    card.appendChild(present);

    scene.events.forEach((event, j) => {
      const eventPath = `${scenePath}.events[${j}]`;
      const eventCard = el("div", "card event-card");
      const eventHead = el("div", "card-head", `event #${j + 1}`);
      const removeEvent = el("button", "", "remove event");
      removeEvent.onclick = () => {
        scene.events.splice(j, 1);
        renderAuthor();
      };
      eventHead.append(" ", removeEvent);
      eventCard.appendChild(eventHead);
      eventCard.appendChild(diagSlot(eventPath, diags));
      eventCard.appendChild(field("Id", event.id, `${eventPath}.id`, diags,
                                  (v) => (event.id = v)));

      const kindWrap = el("label", "field");
      kindWrap.appendChild(el("span", "field-label", "Condition"));
      const kindSelect = el("select", "field-input");
      for (const kind of ["when", "after_lines"] as const) {
        const option = el("option", "", kind === "when" ? "player/story predicate" : "after N lines");
        option.value = kind;
        kindSelect.appendChild(option);
      }
      kindSelect.value = conditionKind(event);
      kindSelect.onchange = () => {
        scene.events[j] = setConditionKind(event, kindSelect.value as "when" | "after_lines");
        renderAuthor();
      };
      kindWrap.appendChild(kindSelect);
      eventCard.appendChild(kindWrap);

      if (conditionKind(event) === "when") {
        eventCard.appendChild(field("Statement", event.when ?? "", `${eventPath}.when`,
                                    diags, (v) => (event.when = v)));
      } else {
        const countField = el("label", "field");
        countField.appendChild(el("span", "field-label", "After generated lines"));
        const countInput = el("input", "field-input");
        countInput.type = "number";
        countInput.value = String(event.after_lines ?? 1);
        countInput.oninput = () => {
          event.after_lines = Number(countInput.value);
          refreshDiagnostics();
        };
        countField.appendChild(countInput);
        countField.appendChild(diagSlot(`${eventPath}.after_lines`, diags));
        eventCard.appendChild(countField);
      }

      eventCard.appendChild(field("Outcome", event.outcome.description,
                                  `${eventPath}.outcome.description`, diags,
                                  (v) => (event.outcome.description = v), true));

      const endsWrap = el("label", "field checkbox");
      const endsInput = el("input");
      endsInput.type = "checkbox";
      endsInput.checked = event.outcome.ends_scene;
      endsInput.onchange = () => {
        event.outcome.ends_scene = endsInput.checked;
        refreshDiagnostics();
      };
      endsWrap.append(endsInput, el("span", "field-label", "ends the scene"));
      eventCard.appendChild(endsWrap);

      const transitionWrap = el("label", "field");
      transitionWrap.appendChild(el("span", "field-label", "Transition to (optional scene name)"));
      const transitionInput = el("input", "field-input");
      transitionInput.value = event.outcome.transition_to ?? "";
      transitionInput.oninput = () => {
        const value = transitionInput.value.trim();
        if (value) event.outcome.transition_to = value;
        else delete event.outcome.transition_to;
        refreshDiagnostics();
      };
      transitionWrap.appendChild(transitionInput);
      transitionWrap.appendChild(diagSlot(`${eventPath}.outcome.transition_to`, diags));
      eventCard.appendChild(transitionWrap);

      card.appendChild(eventCard);
    });
    const addEvent = el("button", "", "add event");
    addEvent.onclick = () => {
      scene.events.push({
        id: `event_${scene.events.length + 1}`,
        when: "",
        outcome: { description: "", ends_scene: false },
      });
      renderAuthor();
    };
    card.appendChild(addEvent);
    pane.appendChild(card);
  });
  const addScene = el("button", "", "add scene");
  addScene.onclick = () => {
    doc.scenes.push({
      name: `Scene ${doc.scenes.length + 1}`,
      characters: doc.characters.map((c) => c.name),
      setting: "",
      opening_line: "",
      events: [],
    });
    renderAuthor();
  };
  pane.appendChild(addScene);

  refreshDiagnostics();
}

function wireAuthor(): void {
  byId<HTMLButtonElement>("author-play").onclick = () => void openPlayer(doc);
  byId<HTMLButtonElement>("author-download").onclick = () => {
    const blob = new Blob([serializeDocument(doc)], { type: "application/json" });
    const link = el("a");
    link.href = URL.createObjectURL(blob);
    link.download = `${doc.title.replace(/\s+/g, "_").toLowerCase() || "schema"}.json`;
    link.click();
    URL.revokeObjectURL(link.href);
  };
  byId<HTMLInputElement>("author-upload").onchange = async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const text = await file.text();
    try {
      doc = JSON.parse(text) as SchemaDoc;
      renderAuthor();
    } catch (exc) {
      alert(`not a schema document: ${exc}`);
    }
    input.value = "";
  };
}

// ---------------------------------------------------------------- tabs + boot

function switchTab(tab: "player" | "author"): void {
  byId<HTMLDivElement>("player-tab").hidden = tab !== "player";
  byId<HTMLDivElement>("author-tab").hidden = tab !== "author";
  byId<HTMLButtonElement>("tab-player").classList.toggle("active", tab === "player");
  byId<HTMLButtonElement>("tab-author").classList.toggle("active", tab === "author");
}

export function boot(): void {
  byId<HTMLButtonElement>("tab-player").onclick = () => switchTab("player");
  byId<HTMLButtonElement>("tab-author").onclick = () => switchTab("author");
  wireComposer();
  wireAuthor();
  renderAuthor();
  switchTab("author");
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
