"""World-model viewer support: per-agent belief dumps to replayable rcg files.

Dump format (one s-expression per line)::

    (wm-owner l 7)
    (wm 12 (self -10 0 0.3 0 90) (b 0 0 0 0 0.9) (p r 5 3 4 0 0 0.6))
"""

from __future__ import annotations

import csv
import enum
import math
import random
import re
from dataclasses import dataclass, replace
from typing import IO, Iterable, Iterator

from ._io import gc_paused
from .model import LogSyntaxError, PlayerId, Side, Vec2
from .rcg import (
    BallSnapshot,
    MatchRecord,
    PlayerSnapshot,
    PlayModeChange,
    RawParam,
    ShowFrame,
    TeamInfo,
)


class MissingOwnerHeader(ValueError):
    pass


class TruthRequired(ValueError):
    pass


class HorizonUncovered(ValueError):
    pass


class FillPolicy(enum.Enum):
    REAL = "real"
    HOLD = "hold"
    SKIP = "skip"


SELF, BALL, PLAYER = "self", "ball", "player"


@dataclass(frozen=True, slots=True)
class WmObject:
    kind: str                       # self | ball | player
    pos: Vec2
    vel: Vec2 | None = None
    body_dir: float | None = None
    confidence: float = 1.0
    player: PlayerId | None = None  # set for kind == player

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if (self.kind == PLAYER) != (self.player is not None):
            raise ValueError("player objects carry a PlayerId, others do not")


@dataclass(frozen=True, slots=True)
class WmCycle:
    time: int
    objects: tuple[WmObject, ...] = ()
    filled: str | None = None       # fill policy that produced this cycle, if any

    def __post_init__(self):
        kinds = [o.kind for o in self.objects]
        if kinds.count(SELF) > 1 or kinds.count(BALL) > 1:
            raise ValueError(f"cycle {self.time}: at most one self and one ball")
        pids = [o.player for o in self.objects if o.kind == PLAYER]
        if len(set(pids)) != len(pids):
            raise ValueError(f"cycle {self.time}: duplicate player belief")

    def get(self, kind: str, player: PlayerId | None = None) -> WmObject | None:
        for o in self.objects:
            if o.kind == kind and o.player == player:
                return o
        return None


@dataclass(frozen=True)
class WmSeries:
    owner: PlayerId
    cycles: tuple[WmCycle, ...] = ()
    skipped: int = 0

    def __post_init__(self):
        times = [c.time for c in self.cycles]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("world-model cycle times must be strictly increasing")

    @property
    def times(self) -> list[int]:
        return [c.time for c in self.cycles]

    def at(self, t: int) -> WmCycle | None:
        for c in self.cycles:
            if c.time == t:
                return c
        return None


# ---------------------------------------------------------------- parsing

_NUM = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_OWNER = re.compile(r"^\s*\(wm-owner\s+([lr])\s+(\d+)\s*\)\s*$")
_CYCLE = re.compile(r"^\s*\(wm\s+(\d+)((?:\s*\([^()]*\))*)\s*\)\s*$")
_CLAUSE = re.compile(r"\(([^()]*)\)")
_N5 = r"\s+".join([f"({_NUM.pattern})"] * 5)
_FAST_CLAUSE = re.compile(rf"\s*(?:(self|b)|p\s+([lr])\s+(\d+))\s+{_N5}\s*")
_PIDS = {(s.value, str(u)): PlayerId(s, u) for s in (Side.LEFT, Side.RIGHT) for u in range(1, 12)}


def _nums(tokens: list[str], n: int, what: str) -> list[float]:
    if len(tokens) != n or not all(_NUM.fullmatch(t) for t in tokens):
        raise ValueError(f"{what} clause needs {n} numbers")
    return [float(t) for t in tokens]


def _parse_clause(body: str, owner: PlayerId) -> WmObject:
    m = _FAST_CLAUSE.fullmatch(body)
    if m:
        tag, side, unum, *nums = m.groups()
        x, y, vx, vy, last = map(float, nums)
        if tag == "self":
            return WmObject(SELF, Vec2(x, y), Vec2(vx, vy), last, 1.0)
        if tag == "b":
            return WmObject(BALL, Vec2(x, y), Vec2(vx, vy), None, last)
        pid = _PIDS.get((side, unum))
        if pid is not None and pid != owner:
            return WmObject(PLAYER, Vec2(x, y), Vec2(vx, vy), None, last, pid)
    # slow path: precise diagnostics
    toks = body.split()
    if not toks:
        raise ValueError("empty clause")
    tag, rest = toks[0], toks[1:]
    if tag == "self":
        x, y, vx, vy, bd = _nums(rest, 5, "self")
        return WmObject(SELF, Vec2(x, y), Vec2(vx, vy), bd, 1.0)
    if tag == "b":
        x, y, vx, vy, conf = _nums(rest, 5, "ball")
        return WmObject(BALL, Vec2(x, y), Vec2(vx, vy), None, conf)
    if tag == "p":
        if len(rest) != 7 or rest[0] not in ("l", "r") or not rest[1].isdigit():
            raise ValueError("player clause is (p <l|r> <unum> x y vx vy conf)")
        pid = PlayerId(Side.parse(rest[0]), int(rest[1]))
        if pid == owner:
            raise ValueError("owner must be reported with (self ...), not (p ...)")
        x, y, vx, vy, conf = _nums(rest[2:], 5, "player")
        return WmObject(PLAYER, Vec2(x, y), Vec2(vx, vy), None, conf, pid)
    raise ValueError(f"unknown clause {tag!r}")


def parse_wm_dump(stream: IO | Iterable[str], strict: bool = False) -> WmSeries:
    """Parse one agent's dump. Tolerant mode skips bad, duplicate and out-of-order lines."""
    with gc_paused():
        return _parse_wm_dump(stream, strict)


def _parse_wm_dump(stream, strict: bool) -> WmSeries:
    it = iter(stream)
    owner = None
    line_no = 0
    for line in it:
        line_no += 1
        if line.strip():
            m = _OWNER.match(line)
            if not m:
                raise MissingOwnerHeader("first line must be (wm-owner <l|r> <unum>)")
            owner = PlayerId(Side.parse(m.group(1)), int(m.group(2)))
            break
    if owner is None:
        raise MissingOwnerHeader("empty world-model dump")
    cycles: list[WmCycle] = []
    skipped = 0
    for line in it:
        line_no += 1
        if not line.strip():
            continue
        try:
            m = _CYCLE.match(line)
            if not m:
                raise ValueError("expected (wm <time> clauses...)")
            t = int(m.group(1))
            if cycles and t <= cycles[-1].time:
                raise ValueError(f"cycle {t} does not follow {cycles[-1].time}")
            objs = tuple(_parse_clause(c, owner) for c in _CLAUSE.findall(m.group(2)))
            cycles.append(WmCycle(t, objs))
        except ValueError as exc:
            if strict:
                raise LogSyntaxError(line_no, str(exc)) from None
            skipped += 1
    return WmSeries(owner, tuple(cycles), skipped)


def parse_wm_text(text: str, strict: bool = False) -> WmSeries:
    return parse_wm_dump(text.splitlines(), strict=strict)


def _r(v: float) -> str:
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def format_wm_dump(wm: WmSeries) -> str:
    lines = [f"(wm-owner {wm.owner.side.value} {wm.owner.unum})"]
    for c in wm.cycles:
        parts = [f"(wm {c.time}"]
        for o in c.objects:
            vel = o.vel or Vec2(0.0, 0.0)
            if o.kind == SELF:
                parts.append(f"(self {_r(o.pos.x)} {_r(o.pos.y)} {_r(vel.x)} {_r(vel.y)} {_r(o.body_dir or 0.0)})")
            elif o.kind == BALL:
                parts.append(f"(b {_r(o.pos.x)} {_r(o.pos.y)} {_r(vel.x)} {_r(vel.y)} {_r(o.confidence)})")
            else:
                parts.append(f"(p {o.player.side.value} {o.player.unum} {_r(o.pos.x)} {_r(o.pos.y)} "
                             f"{_r(vel.x)} {_r(vel.y)} {_r(o.confidence)})")
        lines.append(" ".join(parts) + ")")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- filling

def truth_cycle(frame: ShowFrame, owner: PlayerId, confidence: float = 0.0) -> WmCycle:
    """Belief built from a truth frame; confidence 0 marks it as substituted."""
    objs = [WmObject(BALL, frame.ball.pos, frame.ball.vel, None, confidence)]
    for p in frame.players:
        if p.id == owner:
            objs.insert(0, WmObject(SELF, p.pos, p.vel, p.body_dir, 1.0))
        else:
            objs.append(WmObject(PLAYER, p.pos, p.vel, None, confidence, p.id))
    return WmCycle(frame.time, tuple(objs))


def fill_missing(wm: WmSeries, truth: MatchRecord | None, policy: FillPolicy | str = FillPolicy.REAL,
                 horizon: range | None = None) -> WmSeries:
    """Make ``wm`` dense over ``horizon`` (default: the truth's cycles, else the dump's span).

    Cycles outside the horizon are dropped. ``skip`` leaves gaps in place.
    """
    policy = FillPolicy(policy)
    if policy is FillPolicy.REAL and truth is None:
        raise TruthRequired("fill policy 'real' needs a truth rcg")
    if horizon is None:
        if truth is not None and truth.frames:
            horizon = range(truth.frames[0].time, truth.frames[-1].time + 1)
        elif wm.cycles:
            horizon = range(wm.cycles[0].time, wm.cycles[-1].time + 1)
        else:
            horizon = range(0)
    have = {c.time: c for c in wm.cycles}
    if policy is FillPolicy.SKIP:
        return WmSeries(wm.owner, tuple(have[t] for t in horizon if t in have), wm.skipped)
    frames = truth.frame_index if truth is not None else {}
    if policy is FillPolicy.REAL:
        missing = [t for t in horizon if t not in have and t not in frames]
        if missing:
            raise HorizonUncovered(f"truth has no frame for cycle {missing[0]} ({len(missing)} missing)")
    out = []
    last: WmCycle | None = None
    for t in horizon:
        c = have.get(t)
        if c is not None:
            out.append(c)
            last = c
        elif policy is FillPolicy.REAL:
            out.append(replace(truth_cycle(frames[t], wm.owner), filled="real"))
        else:
            objs = last.objects if last is not None else ()
            out.append(WmCycle(t, objs, filled="hold"))
    return WmSeries(wm.owner, tuple(out), wm.skipped)


# ---------------------------------------------------------------- emitting

_ZERO = Vec2(0.0, 0.0)


def _snapshot(pid: PlayerId, o: WmObject) -> PlayerSnapshot:
    return PlayerSnapshot(
        id=pid, type_id=0, state_flags=0x1, pos=o.pos, vel=o.vel or _ZERO,
        body_dir=o.body_dir if o.body_dir is not None else 0.0, neck_dir=0.0,
        view_quality="h", view_width=90.0, stamina=0.0, effort=0.0, recovery=0.0,
    )


def belief_frame(c: WmCycle, owner: PlayerId) -> ShowFrame:
    ball = c.get(BALL)
    b = BallSnapshot(ball.pos, ball.vel or _ZERO) if ball is not None else BallSnapshot(_ZERO, _ZERO)
    players = []
    for o in c.objects:
        if o.kind == SELF:
            players.append(_snapshot(owner, o))
        elif o.kind == PLAYER:
            players.append(_snapshot(o.player, o))
    players.sort(key=lambda p: p.id.sort_key)
    return ShowFrame(c.time, b, tuple(players))


def emit_rcg(wm: WmSeries, meta: MatchRecord | None = None) -> list:
    """rcg entries for a belief series, with params, playmode and team lines copied from ``meta``.

    Meta lines are interleaved before the first frame at or after their time;
    those after the last emitted cycle are not copied.
    """
    entries: list = []
    pending: list = []
    if meta is not None:
        for e in meta.entries:
            if isinstance(e, RawParam):
                entries.append(e)
            elif isinstance(e, (PlayModeChange, TeamInfo)):
                pending.append(e)
    i = 0
    for c in wm.cycles:
        while i < len(pending) and pending[i].time <= c.time:
            entries.append(pending[i])
            i += 1
        entries.append(belief_frame(c, wm.owner))
    return entries


def output_name(owner: PlayerId) -> str:
    return f"wm_{owner.side.value}{owner.unum}.rcg"


# ---------------------------------------------------------------- diffing

DIFF_COLUMNS = ("time", "object", "err_pos", "err_vel", "flag")


@dataclass(frozen=True, slots=True)
class DiffRow:
    time: int
    object: str
    err_pos: float | None
    err_vel: float | None
    flag: str  # ok | believed_absent | unbelieved


def diff_vs_truth(wm: WmSeries, truth: MatchRecord) -> list[DiffRow]:
    """Belief error per cycle and object; rows for truth players the agent did not believe."""
    frames = truth.frame_index
    rows: list[DiffRow] = []
    for c in wm.cycles:
        f = frames.get(c.time)
        if f is None:
            raise HorizonUncovered(f"truth has no frame for cycle {c.time}")
        truth_players = {p.id: p for p in f.players}
        believed = set()
        for o in c.objects:
            if o.kind == BALL:
                label, tpos, tvel = "ball", f.ball.pos, f.ball.vel
            else:
                pid = wm.owner if o.kind == SELF else o.player
                believed.add(pid)
                label = "self" if o.kind == SELF else pid.label
                tp = truth_players.get(pid)
                if tp is None:
                    rows.append(DiffRow(c.time, label, None, None, "believed_absent"))
                    continue
                tpos, tvel = tp.pos, tp.vel
            ev = None if o.vel is None else o.vel.dist(tvel)
            rows.append(DiffRow(c.time, label, o.pos.dist(tpos), ev, "ok"))
        for pid in sorted(truth_players):
            if pid not in believed:
                rows.append(DiffRow(c.time, "self" if pid == wm.owner else pid.label, None, None, "unbelieved"))
    return rows


def write_diff_csv(rows: Iterable[DiffRow], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(DIFF_COLUMNS)
    for r in rows:
        w.writerow([r.time, r.object, "" if r.err_pos is None else repr(r.err_pos),
                    "" if r.err_vel is None else repr(r.err_vel), r.flag])


def mean_position_error(rows: Iterable[DiffRow]) -> float:
    errs = [r.err_pos for r in rows if r.err_pos is not None]
    return math.fsum(errs) / len(errs) if errs else 0.0


# ------------------------------------------------------- synthetic dumps

def synthesize_dump(truth: MatchRecord, owner: PlayerId, sigma: float = 0.0, seed: int = 0,
                    dropout: float = 0.0, offset: Vec2 = _ZERO) -> WmSeries:
    """A belief series derived from truth: Gaussian position noise, constant offset, dropped cycles.

    Velocities and headings are copied exactly. Every object is believed with confidence 1.
    """
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout must lie in [0, 1)")
    rng = random.Random(seed)

    def belief(p: Vec2) -> Vec2:
        x, y = p.x + offset.x, p.y + offset.y
        if sigma:
            x, y = x + rng.gauss(0.0, sigma), y + rng.gauss(0.0, sigma)
        return Vec2(x, y)

    cycles = []
    for f in truth.frames:
        if dropout and rng.random() < dropout:
            continue
        objs = [WmObject(BALL, belief(f.ball.pos), f.ball.vel, None, 1.0)]
        for p in f.players:
            if p.id == owner:
                objs.insert(0, WmObject(SELF, belief(p.pos), p.vel, p.body_dir, 1.0))
            else:
                objs.append(WmObject(PLAYER, belief(p.pos), p.vel, None, 1.0, p.id))
        cycles.append(WmCycle(f.time, tuple(objs)))
    return WmSeries(owner, tuple(cycles))


def iter_owners(side: Side | None = None) -> Iterator[PlayerId]:
    for s in ((side,) if side else (Side.LEFT, Side.RIGHT)):
        for u in range(1, 12):
            yield PlayerId(s, u)
