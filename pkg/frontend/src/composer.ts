/** The two-field input composer: actions plus dialogue, serialized to the
 * "(actions) dialogue" form the engine expects. Empty submissions are
 * blocked client-side, mirroring the server's input invariant. */

export interface ComposerState {
  actions: string;
  dialogue: string;
}

export function emptyComposer(): ComposerState {
  return { actions: "", dialogue: "" };
}

export function composerIsEmpty(state: ComposerState): boolean {
  return state.actions.trim() === "" && state.dialogue.trim() === "";
}

/** Preview/serialized form shown to the player before sending. */
export function serializeComposer(state: ComposerState): string {
  const parts: string[] = [];
  const actions = state.actions.trim();
  const dialogue = state.dialogue.trim();
  if (actions) parts.push(`(${actions})`);
  if (dialogue) parts.push(dialogue);
  return parts.join(" ");
}

export function composerPayload(state: ComposerState): {
  actions: string | null;
  dialogue: string | null;
} {
  return {
    actions: state.actions.trim() || null,
    dialogue: state.dialogue.trim() || null,
  };
}
