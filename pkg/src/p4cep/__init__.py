"""Compile complex-event rules to match-action state machines and run them."""

from .compiler import CompiledProgram, StateMachine, TransitionRow, compile_rules
from .codegen import generate_artifacts, generate_p4, generate_table_entries
from .engine import Emission, Engine, EventPacket
from .errors import P4CEPError
from .rules import RuleAst, load_headers, parse_headers, parse_rules, validate
from .runtime import EngineHandle, deploy
from .serialize import dumps, loads


def compile_source(source_text: str, headers: dict[str, int]) -> CompiledProgram:
    """Parse, validate and compile rule text in one call."""
    return compile_rules(validate(parse_rules(source_text), headers))


__all__ = [
    "CompiledProgram", "StateMachine", "TransitionRow", "compile_rules", "compile_source",
    "generate_artifacts", "generate_p4", "generate_table_entries",
    "Emission", "Engine", "EventPacket", "P4CEPError",
    "RuleAst", "load_headers", "parse_headers", "parse_rules", "validate",
    "EngineHandle", "deploy", "dumps", "loads",
]
