"""Dramaturge: a storylet-driven interactive narrative engine.

Authors write a story schema (style, characters, scenes, events); a
playthrough realizes it line by line with a completion backend generating
non-player lines and judging event conditions, while the player steers the
story through "(actions) dialogue" input.
"""

from .engine import (
    EngineConfig,
    EventState,
    EventStatus,
    Phase,
    ReplayDivergence,
    SchemaInvalidError,
    Session,
    StepResult,
    WrongPhaseError,
    advance,
    replay,
    resume,
    run_scripted,
    run_until_pause,
    snapshot,
    start_playthrough,
    submit_input,
)
from .instantiation import (
    InstantiationContext,
    InstantiationResult,
    Instantiator,
    ResponseFormatError,
    build_instantiation_prompt,
    parse_instantiation_response,
)
from .interpretation import (
    InterpretationContext,
    InterpretationResult,
    LlmInterpreter,
    RulesInterpreter,
    build_interpretation_prompt,
    evaluate_line_count,
    parse_interpretation_response,
)
from .provider import (
    Cassette,
    CassetteMiss,
    HttpChatProvider,
    Prompt,
    PromptPurpose,
    ProviderConfig,
    ProviderError,
    ProviderExchange,
    RecordingProvider,
    ReplayProvider,
    TransportError,
    prompt_digest,
    record_wrapper,
    replay_provider,
)
from .schema import (
    Character,
    Condition,
    Diagnostic,
    Event,
    LineCountCondition,
    Outcome,
    PredicateCondition,
    Scene,
    SchemaFormatError,
    Severity,
    StorySchema,
    check_document,
    has_errors,
    parse_schema,
    player_character,
    serialize_schema,
    validate_schema,
)
from .transcript import NARRATOR, Line, LineKind, PlayerInput, parse_player_input

__version__ = "0.1.0"
