"""Streaming parser and serializer for text rcg replay logs (ULG4 / ULG5)."""

from __future__ import annotations

import bisect
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Iterator, NamedTuple, Union

from ._io import gc_paused
from .model import (
    FieldSpec,
    all_players,
    LogSyntaxError,
    PlayerId,
    PlayMode,
    Side,
    Vec2,
    parse_playmode,
)

log = logging.getLogger(__name__)

COUNT_NAMES = ("kick", "dash", "turn", "catch", "move", "turn_neck",
               "change_view", "say", "tackle", "pointto", "attentionto")


class BadHeader(ValueError):
    pass


class BallSnapshot(NamedTuple):
    pos: Vec2
    vel: Vec2


# Snapshots are NamedTuples rather than dataclasses: a 6000-cycle log holds
# ~130k of them and tuple construction is several times cheaper.
class PlayerSnapshot(NamedTuple):
    id: PlayerId
    type_id: int
    state_flags: int
    pos: Vec2
    vel: Vec2
    body_dir: float
    neck_dir: float
    pointto: Vec2 | None = None
    view_quality: str = "h"
    view_width: float = 90.0
    stamina: float = 8000.0
    effort: float = 1.0
    recovery: float = 1.0
    stamina_capacity: float | None = None
    focus: PlayerId | None = None
    counts: tuple[int, ...] = (0,) * 11

    def count(self, name: str) -> int:
        return self.counts[COUNT_NAMES.index(name)]


@dataclass(frozen=True, slots=True)
class ShowFrame:
    time: int
    ball: BallSnapshot
    players: tuple[PlayerSnapshot, ...] = ()
    stopped: int = 0

    def player(self, pid: PlayerId) -> PlayerSnapshot | None:
        for p in self.players:
            if p.id == pid:
                return p
        return None


@dataclass(frozen=True, slots=True)
class PlayModeChange:
    time: int
    mode: PlayMode


@dataclass(frozen=True, slots=True)
class TeamInfo:
    time: int
    name_l: str
    name_r: str
    score_l: int
    score_r: int
    penalties: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class Message:
    time: int
    board: int
    text: str


@dataclass(frozen=True, slots=True)
class RawParam:
    tag: str
    raw: str


RcgEntry = Union[ShowFrame, PlayModeChange, TeamInfo, Message, RawParam]

RAW_TAGS = ("server_param", "player_param", "player_type")


@dataclass(frozen=True)
class MatchRecord:
    version: int
    entries: tuple
    skipped: int = 0
    warnings: tuple[str, ...] = ()

    @cached_property
    def frames(self) -> list[ShowFrame]:
        """Show frames sorted by cycle, one per cycle (the last one in the file wins on repeats)."""
        by_time: dict[int, ShowFrame] = {}
        for e in self.entries:
            if isinstance(e, ShowFrame):
                by_time[e.time] = e
        return [by_time[t] for t in sorted(by_time)]

    @cached_property
    def frame_index(self) -> dict[int, ShowFrame]:
        return {f.time: f for f in self.frames}

    @cached_property
    def playmodes(self) -> list[PlayModeChange]:
        return [e for e in self.entries if isinstance(e, PlayModeChange)]

    @cached_property
    def _playmode_times(self) -> list[int]:
        return [p.time for p in self.playmodes]

    def playmode_at(self, time: int) -> PlayMode | None:
        i = bisect.bisect_right(self._playmode_times, time)
        return self.playmodes[i - 1].mode if i else None

    def playmode_changes(self, after: int, upto: int | None = None) -> list[PlayModeChange]:
        """Playmode changes with ``after < time <= upto``."""
        lo = bisect.bisect_right(self._playmode_times, after)
        hi = len(self.playmodes) if upto is None else bisect.bisect_right(self._playmode_times, upto)
        return self.playmodes[lo:hi]

    @cached_property
    def team_info(self) -> TeamInfo | None:
        last = None
        for e in self.entries:
            if isinstance(e, TeamInfo):
                last = e
        return last

    def raw_param(self, tag: str) -> str | None:
        for e in self.entries:
            if isinstance(e, RawParam) and e.tag == tag:
                return e.raw
        return None

    def field_spec(self, **overrides) -> FieldSpec:
        return FieldSpec.from_server_param(self.raw_param("server_param"), **overrides)


# ---------------------------------------------------------------- parsing

_N = r"([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)"
_SHOW_HEAD = re.compile(r"\(show\s+(\d+)(?:,(\d+))?\s+")
_BALL = re.compile(r"\(\(b\)\s+" + r"\s+".join([_N] * 4) + r"\s*\)")
_PLAYER = re.compile(
    r"\(\(([lr])\s+(\d+)\)\s+(\d+)\s+0[xX]([0-9a-fA-F]+)\s+"
    + r"\s+".join([_N] * 6)
    + r"(?:\s+" + _N + r"\s+" + _N + r")?"
    + r"\s*\(v\s+([hl])\s+" + _N + r"\s*\)"
    + r"\s*\(s\s+" + _N + r"\s+" + _N + r"\s+" + _N + r"(?:\s+" + _N + r")?\s*\)"
    + r"\s*(?:\(f\s+([lr])\s+(\d+)\s*\)\s*)?"
    + r"\(c((?:\s+\d+){11})\s*\)\s*\)"
)
_WS = re.compile(r"\s*")
_PLAYMODE = re.compile(r"\(playmode\s+(\d+)\s+([^\s()]+)\s*\)\s*$")
_TEAM = re.compile(r"\(team\s+(\d+)\s+([^\s()]+)\s+([^\s()]+)\s+(\d+)\s+(\d+)((?:\s+\d+)*)\s*\)\s*$")
_MSG = re.compile(r'\(msg\s+(\d+)\s+(\d+)\s+"(.*)"\s*\)\s*$')

_SIDES = {"l": Side.LEFT, "r": Side.RIGHT}


# Fast path for canonical single-space player clauses (what the server and
# this package write). Number tokens are only screened by character class;
# float() does the validation. Anything the fast path does not accept is
# re-parsed by the tolerant slow path, which also produces the precise error.
_FN = r"([-+.\deE]+)"
_FAST_PLAYER = re.compile(
    r"( \(\(([lr] \d+)\) (\d+ 0[xX][0-9a-fA-F]+) " + " ".join([_FN] * 6)
    + r"(?: " + _FN + " " + _FN + r")? \(v ([hl]) " + _FN + r"\) \(s ([-+.\deE ]+)\)"
    + r"(?: \(f ([lr] \d+)\))? \(c ([\d ]+)\)\))"
)


class _Memo(dict):
    """Bounded memo for clause fragments that repeat across frames."""

    __slots__ = ("fn",)
    LIMIT = 8192

    def __init__(self, fn):
        super().__init__()
        self.fn = fn

    def __missing__(self, key):
        if len(self) >= self.LIMIT:
            self.clear()
        v = self[key] = self.fn(key)
        return v


def _type_flags(s: str) -> tuple[int, int]:
    a, b = s.split()
    return int(a), int(b, 16)


def _stamina(s: str) -> tuple:
    v = tuple(map(float, s.split()))
    if len(v) == 3:
        return v + (None,)
    if len(v) != 4:
        raise ValueError("stamina clause takes 3 or 4 numbers")
    return v


_IDS = {f"{p.side.value} {p.unum}": p for p in all_players()}
_M_TF = _Memo(_type_flags)
_M_FLOAT = _Memo(float)
_M_STAM = _Memo(_stamina)
# counters change every cycle, so single tokens are memoized rather than clauses
_M_INT = _Memo(int)


def _fast_players(text: str, pos: int) -> list | None:
    body = text[pos:]
    if not body.endswith(")"):
        return None
    found = _FAST_PLAYER.findall(body)
    # non-overlapping matches whose lengths add up to the body tile it exactly
    if sum(len(g[0]) for g in found) != len(body) - 1:
        return None
    tn = tuple.__new__
    fl = float
    ids = _IDS
    tf_m, st_m, f_m, int_tok = _M_TF, _M_STAM, _M_FLOAT, _M_INT.__getitem__
    out = []
    try:
        for _, pid, tf, x, y, vx, vy, bd, nd, px, py, q, w, st, f, c in found:
            ty, flags = tf_m[tf]
            sta, eff, rec, cap = st_m[st]
            width = f_m[w]
            counts = tuple(map(int_tok, c.split()))
            if width <= 0 or len(counts) != 11:
                return None
            out.append(tn(PlayerSnapshot, (
                ids[pid], ty, flags, tn(Vec2, (fl(x), fl(y))), tn(Vec2, (fl(vx), fl(vy))),
                f_m[bd], f_m[nd], None if not px else tn(Vec2, (fl(px), fl(py))),
                q, width, sta, eff, rec, cap, ids[f] if f else None, counts,
            )))
    except (KeyError, ValueError):
        return None
    if len({g[1] for g in found}) != len(found):
        return None
    return out


def parse_show_line(text: str, line_no: int = 0) -> ShowFrame:
    """Parse one ``(show ...)`` line into a ShowFrame."""
    m = _SHOW_HEAD.match(text)
    if not m:
        raise LogSyntaxError(line_no, "expected '(show <time> ...'", 0)
    time = int(m.group(1))
    stopped = int(m.group(2)) if m.group(2) else 0
    pos = m.end()
    b = _BALL.match(text, pos)
    if not b:
        raise LogSyntaxError(line_no, "ball clause needs ((b) x y vx vy)", pos)
    bx, by, bvx, bvy = map(float, b.groups())
    ball = BallSnapshot(Vec2(bx, by), Vec2(bvx, bvy))
    fast = _fast_players(text, b.end())
    if fast is not None:
        return ShowFrame(time, ball, tuple(fast), stopped)
    pos = _WS.match(text, b.end()).end()
    players = []
    seen = set()
    n = len(text)
    while pos < n and text[pos] != ")":
        p = _PLAYER.match(text, pos)
        if not p:
            raise LogSyntaxError(line_no, "malformed player clause", pos)
        players.append(_player_from_match(p, line_no, pos, seen))
        pos = _WS.match(text, p.end()).end()
    if pos >= n or text[pos:].strip() != ")":
        raise LogSyntaxError(line_no, "unterminated show line", pos)
    return ShowFrame(time, ball, tuple(players), stopped)


def _player_from_match(p: re.Match, line_no: int, pos: int, seen: set) -> PlayerSnapshot:
    g = p.groups()
    unum = int(g[1])
    if not 1 <= unum <= 11:
        raise LogSyntaxError(line_no, f"uniform number {unum} out of range", pos)
    pid = PlayerId(_SIDES[g[0]], unum)
    if pid in seen:
        raise LogSyntaxError(line_no, f"duplicate player {pid}", pos)
    seen.add(pid)
    width = float(g[13])
    if width <= 0:
        raise LogSyntaxError(line_no, "view width must be positive", pos)
    return PlayerSnapshot(
        id=pid,
        type_id=int(g[2]),
        state_flags=int(g[3], 16),
        pos=Vec2(float(g[4]), float(g[5])),
        vel=Vec2(float(g[6]), float(g[7])),
        body_dir=float(g[8]),
        neck_dir=float(g[9]),
        pointto=Vec2(float(g[10]), float(g[11])) if g[10] is not None else None,
        view_quality=g[12],
        view_width=width,
        stamina=float(g[14]),
        effort=float(g[15]),
        recovery=float(g[16]),
        stamina_capacity=float(g[17]) if g[17] is not None else None,
        focus=PlayerId(_SIDES[g[18]], int(g[19])) if g[18] is not None else None,
        counts=tuple(int(c) for c in g[20].split()),
    )


def parse_entry(line: str, line_no: int = 0) -> RcgEntry:
    """Parse one non-header rcg line."""
    s = line.strip()
    if s.startswith("(show"):
        return parse_show_line(s, line_no)
    if s.startswith("(playmode"):
        m = _PLAYMODE.match(s)
        if not m:
            raise LogSyntaxError(line_no, "malformed playmode line")
        return PlayModeChange(int(m.group(1)), parse_playmode(m.group(2)))
    if s.startswith("(team"):
        m = _TEAM.match(s)
        if not m:
            raise LogSyntaxError(line_no, "malformed team line")
        pen = tuple(int(v) for v in m.group(6).split())
        if pen and len(pen) != 4:
            raise LogSyntaxError(line_no, "team line carries 0 or 4 penalty fields")
        return TeamInfo(int(m.group(1)), m.group(2), m.group(3),
                        int(m.group(4)), int(m.group(5)), pen)
    if s.startswith("(msg"):
        m = _MSG.match(s)
        if not m:
            raise LogSyntaxError(line_no, "malformed msg line")
        return Message(int(m.group(1)), int(m.group(2)), m.group(3))
    for tag in RAW_TAGS:
        if s.startswith("(" + tag) and not s[len(tag) + 1:len(tag) + 2].isalnum():
            if not _balanced(s):
                raise LogSyntaxError(line_no, f"unbalanced parentheses in {tag}")
            return RawParam(tag, line.rstrip("\r\n"))
    raise LogSyntaxError(line_no, "unrecognized entry", 0)


def _balanced(s: str) -> bool:
    depth = 0
    in_str = False
    for c in s:
        if c == '"':
            in_str = not in_str
        elif in_str:
            continue
        elif c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0 and not in_str


def _lines(stream) -> Iterator[str]:
    for line in stream:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        yield line


def read_header(first: str) -> int:
    h = first.strip()
    if h == "ULG4":
        return 4
    if h == "ULG5":
        return 5
    raise BadHeader(f"expected ULG4 or ULG5 header, got {h[:20]!r}")


def iter_rcg(stream: Iterable, strict: bool = True, stats: dict | None = None) -> Iterator[RcgEntry]:
    """Yield entries one line at a time; the header must already be consumed.

    ``stats`` (if given) receives ``skipped`` and ``blank`` counters.
    """
    if stats is None:
        stats = {}
    stats.setdefault("skipped", 0)
    stats.setdefault("blank", 0)
    for line_no, line in enumerate(_lines(stream), start=2):
        if not line.strip():
            stats["blank"] += 1
            continue
        try:
            yield parse_entry(line, line_no)
        except LogSyntaxError:
            if strict:
                raise
            stats["skipped"] += 1
            log.debug("skipping malformed rcg line %d", line_no)


def parse_rcg(stream: IO | Iterable, strict: bool = True) -> MatchRecord:
    with gc_paused():
        return _parse_rcg(stream, strict)


def _parse_rcg(stream, strict: bool) -> MatchRecord:
    it = iter(_lines(stream))
    first = next(it, "")
    version = read_header(first)
    stats: dict = {}
    entries = []
    warnings = []
    last_time = -1
    for e in iter_rcg(it, strict=strict, stats=stats):
        if isinstance(e, ShowFrame):
            if e.time < last_time:
                msg = f"frame time {e.time} after {last_time}"
                warnings.append(msg)
                log.warning("non-monotone rcg: %s", msg)
            last_time = max(last_time, e.time)
        entries.append(e)
    return MatchRecord(version, tuple(entries), stats["skipped"], tuple(warnings))


def parse_rcg_text(text: str, strict: bool = True) -> MatchRecord:
    return parse_rcg(text.splitlines(), strict=strict)


# ------------------------------------------------------------ serializing

def fmt_num(v: float) -> str:
    """Shortest text that parses back to the same float (integral values drop '.0')."""
    r = repr(v)
    return r[:-2] if r.endswith(".0") else r


_INTEGRAL = re.compile(r"\.0(?=[ )])")


_COUNTS_FMT = " ".join(["%d"] * 11)


_SIDE_CHAR = {Side.LEFT: "l", Side.RIGHT: "r"}
_STATIC_TEXT: dict = {}  # clause fragments that rarely change between frames


def _static_parts(ty, flags, q, w, sta, eff, rec, cap, focus) -> tuple[str, str]:
    stam = f"{sta!r} {eff!r} {rec!r}" if cap is None else f"{sta!r} {eff!r} {rec!r} {cap!r}"
    foc = "" if focus is None else f" (f {_SIDE_CHAR[focus.side]} {focus.unum})"
    return f"{ty} {flags:#x}", f"(v {q} {w!r}) (s {stam}){foc} (c "


def _fmt_player(p: PlayerSnapshot) -> str:
    pid, ty, flags, pos, vel, bd, nd, pt, q, w, sta, eff, rec, cap, focus, counts = p
    key = (ty, flags, q, w, sta, eff, rec, cap, focus)
    fixed = _STATIC_TEXT.get(key)
    if fixed is None:
        if len(_STATIC_TEXT) >= 4096:
            _STATIC_TEXT.clear()
        fixed = _STATIC_TEXT[key] = _static_parts(*key)
    opt = "" if pt is None else f" {pt.x!r} {pt.y!r}"
    return (f"(({_SIDE_CHAR[pid.side]} {pid.unum}) {fixed[0]} {pos.x!r} {pos.y!r} {vel.x!r} {vel.y!r} "
            f"{bd!r} {nd!r}{opt} {fixed[1]}{_COUNTS_FMT % counts}))")


def format_show(frame: ShowFrame) -> str:
    # repr() is the shortest round-tripping float text; integral values then
    # lose their ".0" in one pass over the whole line.
    b = frame.ball
    t = str(frame.time) if not frame.stopped else f"{frame.time},{frame.stopped}"
    head = f"(show {t} ((b) {b.pos.x!r} {b.pos.y!r} {b.vel.x!r} {b.vel.y!r})"
    if frame.players:
        head += " " + " ".join(map(_fmt_player, frame.players))
    return _INTEGRAL.sub("", head + ")")


def serialize_entry(e: RcgEntry, version: int = 5) -> str:
    """Render one entry as a single rcg line (no trailing newline)."""
    if isinstance(e, ShowFrame):
        return format_show(e)
    if isinstance(e, PlayModeChange):
        return f"(playmode {e.time} {e.mode.render()})"
    if isinstance(e, TeamInfo):
        s = f"(team {e.time} {e.name_l} {e.name_r} {e.score_l} {e.score_r}"
        if e.penalties:
            s += " " + " ".join(map(str, e.penalties))
        return s + ")"
    if isinstance(e, Message):
        return f'(msg {e.time} {e.board} "{e.text}")'
    if isinstance(e, RawParam):
        return e.raw
    raise TypeError(f"not an rcg entry: {type(e).__name__}")


def write_rcg(entries: Iterable[RcgEntry], out: IO[str], version: int = 5) -> int:
    """Write a full rcg document; returns the number of entry lines."""
    if version not in (4, 5):
        raise ValueError("only rcg versions 4 and 5 are supported")
    out.write(f"ULG{version}\n")
    n = 0
    for e in entries:
        out.write(serialize_entry(e, version))
        out.write("\n")
        n += 1
    return n


def dumps_rcg(entries: Iterable[RcgEntry], version: int = 5) -> str:
    lines = [f"ULG{version}"]
    lines.extend(serialize_entry(e, version) for e in entries)
    return "\n".join(lines) + "\n"
