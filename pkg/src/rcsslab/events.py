"""Infer touches, passes, shots, tackles and catches from rcg (+ optional rcl) logs."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .model import (
    END_OF_PLAY_KINDS,
    FieldSpec,
    PlayerId,
    PlayModeKind,
    Side,
    Vec2,
)
from .rcg import MatchRecord
from .rcl import CommandKind, CommandLog, bind_sides


class MissingCommandLog(ValueError):
    pass


@dataclass(frozen=True)
class EventParams:
    epsilon_touch: float = 0.05      # m/cycle, velocity-prediction residual
    max_pass_window: int = 40        # cycles
    shot_min_speed: float = 1.5      # m/cycle right after the kick
    shot_y_tolerance: float = 1.0    # m beyond the post
    min_pass_speed: float = 0.5      # slower kicks are ball control, not passes
    success_window: int = 2          # cycles for tackle / catch outcomes


KICK, TACKLE, CATCH = "kick", "tackle", "catch"
EV_COMMAND, EV_VELOCITY, EV_BOTH = "command", "velocity_discontinuity", "both"


@dataclass(frozen=True, slots=True)
class Touch:
    time: int
    player: PlayerId
    kind: str
    ball_pos: Vec2
    evidence: str
    effective: bool = True


@dataclass(frozen=True, slots=True)
class PassEvent:
    kicker: PlayerId
    receiver: PlayerId | None
    start_time: int
    end_time: int
    outcome: str  # completed | intercepted | out_of_play | expired
    origin: Vec2  # kicker position at the kick


@dataclass(frozen=True, slots=True)
class ShotEvent:
    shooter: PlayerId
    time: int
    target_goal: Side
    outcome: str  # goal | saved | off_target | blocked
    origin: Vec2  # shooter position at the kick

    @property
    def on_target(self) -> bool:
        return self.outcome in ("goal", "saved")


@dataclass(frozen=True, slots=True)
class TackleRecord:
    time: int
    player: PlayerId
    success: bool
    ball_pos: Vec2 | None = None


@dataclass(frozen=True, slots=True)
class CatchRecord:
    time: int
    player: PlayerId
    success: bool
    ball_pos: Vec2 | None = None


@dataclass(frozen=True)
class EventLog:
    touches: tuple[Touch, ...] = ()
    passes: tuple[PassEvent, ...] = ()
    shots: tuple[ShotEvent, ...] = ()
    tackles: tuple[TackleRecord, ...] = ()
    catches: tuple[CatchRecord, ...] = ()
    command_counts: dict = field(default_factory=dict)  # PlayerId -> {kind: n}
    has_commands: bool = False

    @property
    def effective_touches(self) -> list[Touch]:
        return [t for t in self.touches if t.effective]


class _Kinematics:
    """Ball-motion queries over a match's frames."""

    def __init__(self, match: MatchRecord, spec: FieldSpec, params: EventParams):
        self.frames = match.frame_index
        self.decay = spec.ball_decay
        self.eps = params.epsilon_touch
        self._kicked: dict[int, bool] = {}

    def kicked_at(self, t: int) -> bool:
        """Ball motion from t to t+1 breaks free decay in a kinematically consistent way.

        Referee placements (position jump not explained by the new velocity) do not count.
        """
        hit = self._kicked.get(t)
        if hit is None:
            hit = self._kicked[t] = self._compute(t)
        return hit

    def _compute(self, t: int) -> bool:
        f0 = self.frames.get(t)
        f1 = self.frames.get(t + 1)
        if f0 is None or f1 is None:
            return False
        v0, v1 = f0.ball.vel, f1.ball.vel
        d = self.decay
        resid = math.hypot(v1.x - d * v0.x, v1.y - d * v0.y)
        if resid <= self.eps:
            return False
        p0, p1 = f0.ball.pos, f1.ball.pos
        jump = math.hypot(p1.x - p0.x - v1.x / d, p1.y - p0.y - v1.y / d)
        return jump <= self.eps

    def post_kick_velocity(self, t: int) -> Vec2 | None:
        f1 = self.frames.get(t + 1)
        if f1 is None:
            return None
        return Vec2(f1.ball.vel.x / self.decay, f1.ball.vel.y / self.decay)


def _ensure_bound(cmds: CommandLog, match: MatchRecord) -> CommandLog:
    return cmds if cmds.team_side_map else bind_sides(cmds, match)


def _catch_confirmed(match: MatchRecord, t: int, side: Side, window: int) -> bool:
    for pm in match.playmode_changes(t, t + window):
        if pm.mode.side is side and pm.mode.kind in (PlayModeKind.GOALIE_CATCH_BALL, PlayModeKind.FREE_KICK):
            return True
    return False


def _tackle_confirmed(kin: _Kinematics, t: int, window: int) -> bool:
    return any(kin.kicked_at(t + k) for k in range(window))


def detect_touches(match: MatchRecord, cmds: CommandLog | None = None,
                   spec: FieldSpec = FieldSpec(), params: EventParams = EventParams()) -> list[Touch]:
    """One touch per cycle at most; command-only misses are kept with ``effective=False``."""
    kin = _Kinematics(match, spec, params)
    by_time: dict[int, list] = defaultdict(list)
    if cmds is not None:
        cmds = _ensure_bound(cmds, match)
        for r in cmds.records:
            if r.direction != "recv":
                continue
            k = r.command.kind
            if k in (CommandKind.KICK, CommandKind.TACKLE, CommandKind.CATCH):
                by_time[r.time].append((cmds.player_id(r), k.value))
    times = set(by_time)
    times.update(t for t in kin.frames if kin.kicked_at(t))
    reach = {KICK: spec.kickable_area, TACKLE: spec.tackle_dist, CATCH: spec.catchable_area}
    out: list[Touch] = []
    for t in sorted(times):
        frame = kin.frames.get(t)
        if frame is None:
            continue
        ball = frame.ball.pos
        kicked = kin.kicked_at(t)
        chosen = []
        missed = []
        seen = set()
        for pid, kind in by_time.get(t, ()):
            if (pid, kind) in seen:
                continue
            seen.add((pid, kind))
            ps = frame.player(pid)
            if ps is None:
                continue
            d = ps.pos.dist(ball)
            ok = d <= reach[kind]
            if ok and kind == TACKLE:
                ok = _tackle_confirmed(kin, t, params.success_window)
            elif ok and kind == CATCH:
                ok = kicked or _catch_confirmed(match, t, pid.side, params.success_window)
            (chosen if ok else missed).append((d, pid.sort_key, pid, kind))
        if chosen:
            _, _, pid, kind = min(chosen)
            out.append(Touch(t, pid, kind, ball, EV_BOTH if kicked else EV_COMMAND))
        elif kicked:
            near = [(ps.pos.dist(ball), ps.id.sort_key, ps.id) for ps in frame.players
                    if ps.pos.dist(ball) <= spec.kickable_area]
            if near:
                out.append(Touch(t, min(near)[2], KICK, ball, EV_VELOCITY))
        for _, _, pid, kind in sorted(missed):
            out.append(Touch(t, pid, kind, ball, EV_COMMAND, effective=False))
    return out


def _player_pos(match: MatchRecord, t: int, pid: PlayerId, fallback: Vec2) -> Vec2:
    f = match.frame_index.get(t)
    ps = f.player(pid) if f is not None else None
    return ps.pos if ps is not None else fallback


def shot_target(touch: Touch, match: MatchRecord, spec: FieldSpec = FieldSpec(),
                params: EventParams = EventParams()) -> Side | None:
    """Goal (by its side) whose mouth the post-kick ball ray crosses, if this kick is a shot."""
    if touch.kind != KICK or not touch.effective:
        return None
    kin = _Kinematics(match, spec, params)
    v = kin.post_kick_velocity(touch.time)
    if v is None or v.norm() < params.shot_min_speed:
        return None
    return _ray_goal(touch.ball_pos, v, touch.player.side, spec, params)


def _ray_goal(origin: Vec2, v: Vec2, shooter_side: Side, spec: FieldSpec,
              params: EventParams) -> Side | None:
    # the left team attacks the goal at +x for the whole match in rcg coordinates
    goal = shooter_side.opposite
    gx = spec.half_length if goal is Side.RIGHT else -spec.half_length
    if v.x == 0 or (gx - origin.x) / v.x <= 0:
        return None
    y = origin.y + (gx - origin.x) / v.x * v.y
    if abs(y) <= spec.goal_half_width + params.shot_y_tolerance:
        return goal
    return None


def _first_stoppage(match: MatchRecord, after: int):
    """First playmode change after ``after`` that is not a switch to play_on."""
    for pm in match.playmode_changes(after):
        if not pm.mode.is_play_on:
            return pm
    return None


def detect_shots(touches: list[Touch], match: MatchRecord, spec: FieldSpec = FieldSpec(),
                 params: EventParams = EventParams()) -> list[ShotEvent]:
    kin = _Kinematics(match, spec, params)
    eff = [t for t in touches if t.effective]
    out = []
    for i, k in enumerate(eff):
        if k.kind != KICK:
            continue
        v = kin.post_kick_velocity(k.time)
        if v is None or v.norm() < params.shot_min_speed:
            continue
        goal = _ray_goal(k.ball_pos, v, k.player.side, spec, params)
        if goal is None:
            continue
        nxt = next((t for t in eff[i + 1:] if t.time > k.time), None)
        pm = _first_stoppage(match, k.time)
        side = k.player.side
        if pm is not None and (nxt is None or pm.time <= nxt.time):
            if pm.mode.kind is PlayModeKind.GOAL and pm.mode.side is side:
                outcome = "goal"
            elif pm.mode.kind is PlayModeKind.GOALIE_CATCH_BALL and pm.mode.side is side.opposite:
                outcome = "saved"
            else:
                outcome = "off_target"
        elif nxt is not None and nxt.player.side is not side:
            if nxt.kind == CATCH or _catch_confirmed(match, nxt.time, nxt.player.side, params.success_window):
                outcome = "saved"
            else:
                outcome = "blocked"
        else:
            outcome = "off_target"
        origin = _player_pos(match, k.time, k.player, k.ball_pos)
        out.append(ShotEvent(k.player, k.time, goal, outcome, origin))
    return out


def detect_passes(touches: list[Touch], match: MatchRecord, spec: FieldSpec = FieldSpec(),
                  params: EventParams = EventParams(), shots: list[ShotEvent] | None = None) -> list[PassEvent]:
    """Close each kick at the next touch, stoppage, or window expiry.

    Kicks that are shots, or too slow to be passes, open no candidate. Candidates
    cut off by the end of a half or by the end of the data are dropped.
    """
    kin = _Kinematics(match, spec, params)
    if shots is None:
        shots = detect_shots(touches, match, spec, params)
    shot_keys = {(s.time, s.shooter) for s in shots}
    eff = [t for t in touches if t.effective]
    last_time = match.frames[-1].time if match.frames else 0
    out = []
    for i, k in enumerate(eff):
        if k.kind != KICK or (k.time, k.player) in shot_keys:
            continue
        v = kin.post_kick_velocity(k.time)
        if v is not None and v.norm() < params.min_pass_speed:
            continue
        deadline = k.time + params.max_pass_window
        nxt = next((t for t in eff[i + 1:] if t.time > k.time), None)
        pm = _first_stoppage(match, k.time)
        origin = _player_pos(match, k.time, k.player, k.ball_pos)
        if pm is not None and (nxt is None or pm.time <= nxt.time):
            if pm.time > deadline:
                out.append(PassEvent(k.player, None, k.time, deadline, "expired", origin))
            elif pm.mode.kind in END_OF_PLAY_KINDS:
                continue
            else:
                out.append(PassEvent(k.player, None, k.time, pm.time, "out_of_play", origin))
        elif nxt is not None:
            if nxt.time > deadline:
                out.append(PassEvent(k.player, None, k.time, deadline, "expired", origin))
            elif nxt.player == k.player:
                continue  # dribble
            elif nxt.player.side is k.player.side:
                out.append(PassEvent(k.player, nxt.player, k.time, nxt.time, "completed", origin))
            else:
                out.append(PassEvent(k.player, nxt.player, k.time, nxt.time, "intercepted", origin))
        elif last_time > deadline:
            out.append(PassEvent(k.player, None, k.time, deadline, "expired", origin))
    return out


def score_tackles_catches(cmds: CommandLog | None, match: MatchRecord, spec: FieldSpec = FieldSpec(),
                          params: EventParams = EventParams()) -> tuple[list[TackleRecord], list[CatchRecord]]:
    if cmds is None:
        raise MissingCommandLog("tackle and catch scoring needs an rcl command log")
    cmds = _ensure_bound(cmds, match)
    kin = _Kinematics(match, spec, params)
    tackles = []
    catches = []
    for r in cmds.records:
        if r.direction != "recv":
            continue
        kind = r.command.kind
        if kind not in (CommandKind.TACKLE, CommandKind.CATCH):
            continue
        pid = cmds.player_id(r)
        frame = kin.frames.get(r.time)
        ball = frame.ball.pos if frame is not None else None
        if kind is CommandKind.TACKLE:
            ps = frame.player(pid) if frame is not None else None
            ok = (ps is not None and ps.pos.dist(ball) <= spec.tackle_dist
                  and _tackle_confirmed(kin, r.time, params.success_window))
            tackles.append(TackleRecord(r.time, pid, ok, ball))
        else:
            ok = _catch_confirmed(match, r.time, pid.side, params.success_window)
            catches.append(CatchRecord(r.time, pid, ok, ball))
    return tackles, catches


def command_counts(cmds: CommandLog, match: MatchRecord) -> dict:
    cmds = _ensure_bound(cmds, match)
    counts: dict = defaultdict(Counter)
    for r in cmds.records:
        if r.direction == "recv":
            counts[cmds.player_id(r)][r.command.kind.value] += 1
    return {pid: dict(c) for pid, c in counts.items()}


def detect_events(match: MatchRecord, cmds: CommandLog | None = None, spec: FieldSpec | None = None,
                  params: EventParams = EventParams()) -> EventLog:
    if spec is None:
        spec = match.field_spec()
    if cmds is not None:
        cmds = _ensure_bound(cmds, match)
    touches = detect_touches(match, cmds, spec, params)
    shots = detect_shots(touches, match, spec, params)
    passes = detect_passes(touches, match, spec, params, shots=shots)
    tackles: list = []
    catches: list = []
    counts: dict = {}
    if cmds is not None:
        tackles, catches = score_tackles_catches(cmds, match, spec, params)
        counts = command_counts(cmds, match)
    return EventLog(tuple(touches), tuple(passes), tuple(shots), tuple(tackles),
                    tuple(catches), counts, cmds is not None)
