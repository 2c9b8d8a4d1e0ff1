"""Parser for rcl command logs."""

from __future__ import annotations

import enum
import functools
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import IO, Iterable

from ._io import gc_paused
from .model import LogSyntaxError, PlayerId, Side
from .rcg import MatchRecord

log = logging.getLogger(__name__)


class UnknownTeam(ValueError):
    pass


class MissingTeamInfo(ValueError):
    pass


class CommandKind(enum.Enum):
    KICK = "kick"
    DASH = "dash"
    TURN = "turn"
    TACKLE = "tackle"
    CATCH = "catch"
    MOVE = "move"
    TURN_NECK = "turn_neck"
    CHANGE_VIEW = "change_view"
    SAY = "say"
    POINTTO = "pointto"
    ATTENTIONTO = "attentionto"
    OTHER = "other"


# (min, max) numeric argument counts
_NUMERIC_ARITY = {
    CommandKind.KICK: (2, 2),
    CommandKind.DASH: (1, 2),
    CommandKind.TURN: (1, 1),
    CommandKind.TACKLE: (1, 1),
    CommandKind.CATCH: (1, 1),
    CommandKind.MOVE: (2, 2),
    CommandKind.TURN_NECK: (1, 1),
}
_KINDS = {k.value: k for k in CommandKind}


@dataclass(frozen=True, slots=True)
class BodyCommand:
    kind: CommandKind
    args: tuple[float, ...] = ()
    raw: str = ""
    foul: bool | None = None  # tackle only


@dataclass(frozen=True, slots=True)
class CommandRecord:
    time: int
    direction: str  # "recv" or "send"
    team_name: str
    unum: int
    command: BodyCommand
    stopped: int = 0


@dataclass(frozen=True)
class CommandLog:
    records: tuple[CommandRecord, ...]
    referee_events: tuple[tuple[int, str], ...] = ()
    skipped_lines: int = 0
    blank_lines: int = 0
    command_lines: int = 0
    team_side_map: dict = field(default_factory=dict)

    def player_id(self, rec: CommandRecord) -> PlayerId:
        try:
            side = self.team_side_map[rec.team_name]
        except KeyError:
            raise UnknownTeam(f"team {rec.team_name!r} is not bound to a side") from None
        return PlayerId(side, rec.unum)

    def received(self) -> list[CommandRecord]:
        return [r for r in self.records if r.direction == "recv"]


_LINE = re.compile(
    r"^\s*(\d+)(?:,(\d+))?\s+(Recv|Send)\s+(\S+)_(\d+)\s*:\s*(.*?)\s*$"
)
_REFEREE = re.compile(r"^\s*(\d+)(?:,(\d+))?\s+\(referee\s+([^\s()]+)\s*\)\s*$")
_TOKEN = re.compile(r'\(|\)|"[^"]*"|[^\s()"]+')


def split_commands(text: str) -> list[str]:
    """Split ``(a 1)(b 2)`` into top-level s-expressions; raises on imbalance."""
    out = []
    depth = 0
    start = None
    in_str = False
    for i, c in enumerate(text):
        if c == '"':
            in_str = not in_str
            continue
        if in_str:
            continue
        if c == "(":
            if depth == 0:
                start = i
            depth += 1
        elif c == ")":
            depth -= 1
            if depth < 0:
                raise ValueError("unbalanced ')'")
            if depth == 0:
                out.append(text[start:i + 1])
        elif depth == 0 and not c.isspace():
            raise ValueError(f"stray text outside command: {c!r}")
    if depth or in_str:
        raise ValueError("unterminated command")
    if not out:
        raise ValueError("no command")
    return out


@functools.lru_cache(maxsize=4096)
def parse_command(text: str) -> BodyCommand:
    """Parse one ``(name args...)`` command (memoized; commands repeat heavily)."""
    inner = text.strip()
    if not (inner.startswith("(") and inner.endswith(")")):
        raise ValueError("command must be parenthesised")
    toks = _TOKEN.findall(inner[1:-1])
    if not toks or toks[0] in "()":
        raise ValueError("empty command")
    kind = _KINDS.get(toks[0], CommandKind.OTHER)
    if kind is CommandKind.OTHER:
        return BodyCommand(kind, (), text)
    rest = toks[1:]
    if kind in _NUMERIC_ARITY:
        foul = None
        if kind is CommandKind.TACKLE and len(rest) == 2 and rest[1] in ("on", "off", "true", "false"):
            foul = rest[1] in ("on", "true")
            rest = rest[:1]
        lo, hi = _NUMERIC_ARITY[kind]
        if not lo <= len(rest) <= hi:
            raise ValueError(f"{kind.value} takes {lo}..{hi} numbers, got {len(rest)}")
        args = tuple(float(t) for t in rest)
        if not all(math.isfinite(a) for a in args):
            raise ValueError("non-finite command argument")
        return BodyCommand(kind, args, text, foul)
    return BodyCommand(kind, (), text)


def parse_rcl(stream: IO | Iterable, strict: bool = False) -> CommandLog:
    with gc_paused():
        return _parse_rcl(stream, strict)


def _parse_rcl(stream, strict: bool) -> CommandLog:
    records = []
    referee = []
    skipped = blanks = cmd_lines = 0
    for line_no, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        if not line.strip():
            blanks += 1
            continue
        m = _LINE.match(line)
        if m:
            try:
                unum = int(m.group(5))
                if not 1 <= unum <= 11:
                    raise ValueError(f"uniform number {unum} out of range")
                cmds = [parse_command(c) for c in split_commands(m.group(6))]
            except ValueError as exc:
                if strict:
                    raise LogSyntaxError(line_no, str(exc)) from None
                skipped += 1
                continue
            t = int(m.group(1))
            stopped = int(m.group(2) or 0)
            direction = m.group(3).lower()
            for c in cmds:
                records.append(CommandRecord(t, direction, m.group(4), unum, c, stopped))
            cmd_lines += 1
            continue
        m = _REFEREE.match(line)
        if m:
            referee.append((int(m.group(1)), m.group(3)))
            continue
        if strict:
            raise LogSyntaxError(line_no, "unrecognized rcl line")
        skipped += 1
    # stable: keeps per-cycle file order
    records.sort(key=lambda r: (r.time, r.stopped))
    return CommandLog(tuple(records), tuple(referee), skipped, blanks, cmd_lines)


def parse_rcl_text(text: str, strict: bool = False) -> CommandLog:
    return parse_rcl(text.splitlines(), strict=strict)


def bind_sides(cmds: CommandLog, match: MatchRecord) -> CommandLog:
    """Resolve each record's team name to a field side using the rcg team line."""
    info = match.team_info
    if info is None:
        raise MissingTeamInfo("rcg has no (team ...) line; cannot map teams to sides")
    mapping = {info.name_l: Side.LEFT, info.name_r: Side.RIGHT}
    for r in cmds.records:
        if r.team_name not in mapping:
            raise UnknownTeam(
                f"team {r.team_name!r} matches neither {info.name_l!r} nor {info.name_r!r}")
    return replace(cmds, team_side_map=mapping)
