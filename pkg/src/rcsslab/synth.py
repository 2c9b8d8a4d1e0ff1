"""Deterministic generator of labeled synthetic matches (rcg + rcl + labels).

A match is a puppet show: a script of passes, shots, tackles and catches is
realised as ball kinematics that obey the server's decay law between touches,
with players moved into place at each touch. Every scripted touch is backed by
a command record so both detection paths are exercised.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import FieldSpec, PlayerId, Side, Vec2, all_players
from .rcg import (
    BallSnapshot,
    PlayerSnapshot,
    PlayModeChange,
    RawParam,
    ShowFrame,
    TeamInfo,
    COUNT_NAMES,
    dumps_rcg,
)
from .model import parse_playmode

MAX_BALL_SPEED = 3.0
TOUCH_OFFSET = 0.3        # actor distance from the ball at a kick / trap
TACKLE_OFFSET_HIT = 0.8
TACKLE_OFFSET_MISS = 1.5
CATCH_OFFSET_MISS = 1.0
KICK_POWER_RATE = 0.027

PASS_OUTCOMES = ("completed", "intercepted", "out_of_play", "expired")
SHOT_OUTCOMES = ("goal", "saved", "off_target", "blocked")
BINARY_OUTCOMES = ("success", "failure")


class UnrealizableScript(ValueError):
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"event {index}: {reason}")


@dataclass(frozen=True)
class ScriptedEvent:
    kind: str                 # pass | shot | tackle | catch
    time: int
    actor: PlayerId
    outcome: str
    other: PlayerId | None = None   # receiver / interceptor / keeper / blocker
    target: Vec2 | None = None      # aim point for passes and shots
    travel: int | None = None       # cycles until reception, save or block
    speed: float | None = None      # initial ball speed for shots, loose passes, tackles

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "time": self.time, "actor": self.actor.label, "outcome": self.outcome}
        if self.other is not None:
            d["other"] = self.other.label
        if self.target is not None:
            d["target"] = [self.target.x, self.target.y]
        if self.travel is not None:
            d["travel"] = self.travel
        if self.speed is not None:
            d["speed"] = self.speed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ScriptedEvent:
        return cls(
            kind=d["kind"],
            time=int(d["time"]),
            actor=PlayerId.parse(d["actor"]),
            outcome=d["outcome"],
            other=PlayerId.parse(d["other"]) if d.get("other") else None,
            target=Vec2(*map(float, d["target"])) if d.get("target") is not None else None,
            travel=int(d["travel"]) if d.get("travel") is not None else None,
            speed=float(d["speed"]) if d.get("speed") is not None else None,
        )


@dataclass
class GeneratedMatch:
    rcg: str
    rcl: str | None
    labels: list[dict]
    script: list[ScriptedEvent]

    def labels_json(self) -> str:
        return json.dumps({"events": self.labels}, indent=1) + "\n"


def home_position(pid: PlayerId, spec: FieldSpec = FieldSpec()) -> Vec2:
    """Static 4-4-2 shape; the right team mirrors the left."""
    rows = {
        1: (-50.0, 0.0),
        2: (-36.0, -20.0), 3: (-38.0, -7.0), 4: (-38.0, 7.0), 5: (-36.0, 20.0),
        6: (-18.0, -22.0), 7: (-20.0, -7.0), 8: (-20.0, 7.0), 9: (-18.0, 22.0),
        10: (-6.0, -9.0), 11: (-6.0, 9.0),
    }
    x, y = rows[pid.unum]
    if pid.side is Side.RIGHT:
        x, y = -x, -y
    return Vec2(x, y)


def _unit(v: Vec2) -> Vec2:
    n = v.norm()
    return Vec2(1.0, 0.0) if n == 0 else Vec2(v.x / n, v.y / n)


def _deg(v: Vec2) -> float:
    return math.degrees(math.atan2(v.y, v.x))


def _kick_cmd(v: Vec2) -> str:
    power = min(100.0, round(v.norm() / KICK_POWER_RATE, 2))
    return f"(kick {power:g} 0)"


@dataclass
class _Plan:
    actions: dict = field(default_factory=dict)      # t -> ("kick", v) | ("place", p)
    keys: list = field(default_factory=list)         # (pid, t, pos)
    playmodes: list = field(default_factory=list)    # (t, token)
    commands: list = field(default_factory=list)     # (t, pid, text)
    teams: list = field(default_factory=list)        # (t, score_l, score_r)
    label: dict | None = None
    extra_labels: list = field(default_factory=list)
    cursor: tuple | None = None                      # (t, pos, vel)
    ready: int = 0
    live: bool = True
    restart: Side | None = None
    score: tuple[int, int] | None = None


class _Builder:
    def __init__(self, spec: FieldSpec, params=None):
        from .events import EventParams  # shot thresholds shared with the detector config

        self.spec = spec
        self.params = params or EventParams()
        self.d = spec.ball_decay
        self.actions: dict = {}
        self.keys: dict = {pid: [(0, home_position(pid, spec))] for pid in all_players()}
        self.playmodes: list = [(0, "before_kick_off")]
        self.commands: list = []
        self.teams: list = []
        self.labels: list = []
        self.cursor = (0, Vec2(0.0, 0.0), Vec2(0.0, 0.0))
        self.ready = 1
        self.live = False
        self.restart: Side | None = None  # None before kick-off: either side may start
        self.score = (0, 0)

    # -- ball kinematics
    def roll(self, t: int, cursor=None):
        t0, p, v = cursor or self.cursor
        d = self.d
        px, py, vx, vy = p.x, p.y, v.x, v.y
        for _ in range(t - t0):
            px, py = px + vx, py + vy
            vx, vy = vx * d, vy * d
        return Vec2(px, py), Vec2(vx, vy)

    def path(self, p0: Vec2, v: Vec2, n: int) -> list[Vec2]:
        """Ball positions 1..n cycles after a kick with initial velocity v."""
        out = []
        px, py, vx, vy = p0.x, p0.y, v.x, v.y
        d = self.d
        for _ in range(n):
            px, py = px + vx, py + vy
            vx, vy = vx * d, vy * d
            out.append(Vec2(px, py))
        return out

    def inside(self, p: Vec2, margin: float = 0.0) -> bool:
        return (abs(p.x) <= self.spec.half_length - margin
                and abs(p.y) <= self.spec.half_width - margin)

    def rest_inside(self, p0: Vec2, v: Vec2, margin: float) -> bool:
        """The ray is straight and the field convex: checking both ends suffices."""
        return self.inside(p0, margin) and self.inside(p0 + v * (1 / (1 - self.d)), margin)

    def reads_as_shot(self, origin: Vec2, v: Vec2, side: Side) -> bool:
        if v.norm() < self.params.shot_min_speed:
            return False
        gx = self.spec.half_length if side is Side.LEFT else -self.spec.half_length
        if v.x == 0:
            return False
        s = (gx - origin.x) / v.x
        if s <= 0:
            return False
        y = origin.y + s * v.y
        return abs(y) <= self.spec.goal_half_width + self.params.shot_y_tolerance + 0.5

    def speed_for(self, dist: float, n: int) -> float:
        d = self.d
        return dist * (1 - d) / (1 - d ** n)

    # -- events
    def apply(self, i: int, e: ScriptedEvent) -> _Plan:
        """Validate ``e`` against the current state and return its plan (not committed)."""
        if e.time < self.ready:
            raise UnrealizableScript(i, f"time {e.time} precedes earliest feasible cycle {self.ready}")
        handler = {"pass": self._pass, "shot": self._shot, "tackle": self._tackle,
                   "catch": self._catch}.get(e.kind)
        if handler is None:
            raise UnrealizableScript(i, f"unknown event kind {e.kind!r}")
        bp, bv = self.roll(e.time)
        if not self.inside(bp):
            raise UnrealizableScript(i, "ball is out of the field at the event time")
        plan = _Plan(score=self.score)
        if e.kind in ("pass", "shot"):
            if not self.live:
                if self.restart is not None and e.actor.side is not self.restart:
                    raise UnrealizableScript(
                        i, f"restart belongs to the {self.restart.name.lower()} team")
                if self.restart is None:
                    plan.playmodes.append((min(1, e.time), f"kick_off_{e.actor.side.value}"))
                plan.playmodes.append((e.time + 1, "play_on"))
        elif not self.live:
            raise UnrealizableScript(i, f"{e.kind} needs the ball in play")
        handler(i, e, bp, bv, plan)
        return plan

    def commit(self, plan: _Plan) -> None:
        self.actions.update(plan.actions)
        for pid, t, pos in plan.keys:
            self.keys[pid].append((t, pos))
        self.playmodes.extend(plan.playmodes)
        self.commands.extend(plan.commands)
        self.teams.extend(plan.teams)
        if plan.label is not None:
            self.labels.append(plan.label)
        self.labels.extend(plan.extra_labels)
        self.cursor = plan.cursor
        self.ready = plan.ready
        self.live = plan.live
        self.restart = plan.restart
        self.score = plan.score

    def _kick(self, plan: _Plan, t: int, actor: PlayerId, bp: Vec2, v: Vec2, trap_from: Vec2 | None = None):
        if v.norm() > MAX_BALL_SPEED + 1e-9:
            raise ValueError(f"ball speed {v.norm():.2f} exceeds {MAX_BALL_SPEED}")
        if trap_from is not None:
            offset = _unit(trap_from) * TOUCH_OFFSET
            plan.keys.append((actor, t, bp + offset))
            plan.commands.append((t, actor, _kick_cmd(trap_from) .replace(" 0)", " 180)")))
        else:
            plan.keys.append((actor, t, bp - _unit(v) * TOUCH_OFFSET))
            plan.commands.append((t, actor, _kick_cmd(v)))
        plan.actions[t] = ("kick", v)
        plan.cursor = (t + 1, bp + v, v * self.d)

    def _place(self, plan: _Plan, t: int, where: Vec2):
        plan.actions[t] = ("place", where)
        plan.cursor = (t + 1, where, Vec2(0.0, 0.0))

    def _check(self, i: int, cond: bool, reason: str):
        if not cond:
            raise UnrealizableScript(i, reason)

    def _pass(self, i, e: ScriptedEvent, bp, bv, plan: _Plan):
        self._check(i, e.outcome in PASS_OUTCOMES, f"bad pass outcome {e.outcome!r}")
        T = e.time
        side = e.actor.side
        if e.outcome in ("completed", "intercepted"):
            self._check(i, e.other is not None, "pass needs a receiver")
            self._check(i, e.other != e.actor, "receiver must differ from kicker")
            want_same = e.outcome == "completed"
            self._check(i, (e.other.side is side) == want_same,
                        "completed passes go to a teammate, interceptions to an opponent")
            self._check(i, e.target is not None, "pass needs a target point")
            self._check(i, self.inside(e.target, 0.5), "pass target outside the field")
            dist = bp.dist(e.target)
            self._check(i, dist > 1.0, "pass target too close")
            n = e.travel or max(3, round(dist / 1.5))
            speed = self.speed_for(dist, n)
            self._check(i, speed <= MAX_BALL_SPEED, f"needs ball speed {speed:.2f} > {MAX_BALL_SPEED}")
            v = _unit(e.target - bp) * speed
            self._check(i, v.norm() * self.d ** n >= 0.2, "ball arrives too slowly to be received")
            self._check(i, not self.reads_as_shot(bp, v, side), "pass trajectory reads as a shot")
            self._check(i, self.inside(bp + v * ((1 - self.d ** n) / (1 - self.d)), 0.3),
                        "pass leaves the field")
            self._kick(plan, T, e.actor, bp, v)
            arrive_p, arrive_v = self.roll(T + n, plan.cursor)
            self._kick(plan, T + n, e.other, arrive_p, Vec2(0.0, 0.0), trap_from=arrive_v)
            plan.ready = T + n + 1
            plan.live = True
            plan.label = {"kind": "pass", "time": T, "kicker": e.actor.label,
                          "receiver": e.other.label, "outcome": e.outcome, "end_time": T + n}
        elif e.outcome == "out_of_play":
            self._check(i, e.target is not None, "out-of-play pass needs a target point")
            self._check(i, not self.inside(e.target), "out-of-play target must lie outside the field")
            speed = e.speed or 1.8
            self._check(i, speed <= MAX_BALL_SPEED, "ball speed above maximum")
            v = _unit(e.target - bp) * speed
            self._check(i, not self.reads_as_shot(bp, v, side), "pass trajectory reads as a shot")
            pts = self.path(bp, v, 60)
            k = next((j for j, p in enumerate(pts) if not self.inside(p)), None)
            self._check(i, k is not None, "ball stops before leaving the field")
            out_p = pts[k]
            self._check(i, abs(out_p.x) < self.spec.half_length, "ball must cross a touchline")
            self._check(i, k + 1 <= 30, "ball takes too long to leave the field")
            self._kick(plan, T, e.actor, bp, v)
            t_out = T + k + 1
            opp = side.opposite
            plan.playmodes.append((t_out, f"kick_in_{opp.value}"))
            y_line = math.copysign(self.spec.half_width, out_p.y)
            self._place(plan, t_out, Vec2(out_p.x, y_line))
            plan.ready = t_out + 2
            plan.live = False
            plan.restart = opp
            plan.label = {"kind": "pass", "time": T, "kicker": e.actor.label, "receiver": None,
                          "outcome": "out_of_play", "end_time": t_out}
        else:  # expired
            self._check(i, e.target is not None, "expired pass needs a target point")
            speed = e.speed or 0.8
            self._check(i, self.params.min_pass_speed < speed < self.params.shot_min_speed,
                        "expired pass speed must lie between pass and shot thresholds")
            v = _unit(e.target - bp) * speed
            self._check(i, self.rest_inside(bp, v, 0.5), "rolling ball leaves the field")
            self._kick(plan, T, e.actor, bp, v)
            window = self.params.max_pass_window
            plan.ready = T + window + 1
            plan.live = True
            plan.label = {"kind": "pass", "time": T, "kicker": e.actor.label, "receiver": None,
                          "outcome": "expired", "end_time": T + window}

    def _shot(self, i, e: ScriptedEvent, bp, bv, plan: _Plan):
        self._check(i, e.outcome in SHOT_OUTCOMES, f"bad shot outcome {e.outcome!r}")
        T = e.time
        side = e.actor.side
        opp = side.opposite
        gx = self.spec.half_length if side is Side.LEFT else -self.spec.half_length
        self._check(i, e.target is not None, "shot needs a target point")
        aim = Vec2(gx, e.target.y)
        speed = e.speed or 2.6
        self._check(i, self.params.shot_min_speed <= speed <= MAX_BALL_SPEED, "shot speed out of range")
        v = _unit(aim - bp) * speed
        self._check(i, (aim.x - bp.x) * (1 if side is Side.LEFT else -1) > 0, "shot must head to the opponent goal")
        ghw = self.spec.goal_half_width
        if e.outcome in ("goal", "saved", "blocked"):
            self._check(i, abs(aim.y) <= ghw - 0.3, "shot must be aimed inside the posts")
        else:
            self._check(i, ghw + 0.3 <= abs(aim.y) <= ghw + self.params.shot_y_tolerance - 0.3,
                        "off-target shot must narrowly miss the post")
        pts = self.path(bp, v, 60)
        k = next((j for j, p in enumerate(pts) if abs(p.x) > self.spec.half_length), None)
        self._check(i, k is not None and k + 1 <= 40, "shot does not reach the goal line")
        self._check(i, all(abs(p.y) < self.spec.half_width for p in pts[:k + 1]), "shot leaves over a touchline")
        t_line = T + k + 1
        self._kick(plan, T, e.actor, bp, v)
        label = {"kind": "shot", "time": T, "shooter": e.actor.label, "outcome": e.outcome,
                 "target_goal": opp.value}
        if e.outcome == "goal":
            plan.playmodes.append((t_line, f"goal_{side.value}"))
            sl, sr = self.score
            plan.score = (sl + 1, sr) if side is Side.LEFT else (sl, sr + 1)
            plan.teams.append((t_line, *plan.score))
            self._place(plan, t_line, Vec2(0.0, 0.0))
            plan.playmodes.append((t_line + 1, f"kick_off_{opp.value}"))
            plan.ready = t_line + 2
            plan.live = False
            plan.restart = opp
        elif e.outcome == "off_target":
            plan.playmodes.append((t_line, f"goal_kick_{opp.value}"))
            gk = Vec2(math.copysign(self.spec.half_length - 5.5, gx), math.copysign(9.16, aim.y))
            self._place(plan, t_line, gk)
            plan.ready = t_line + 2
            plan.live = False
            plan.restart = opp
        else:
            if e.outcome == "saved":
                stopper = e.other or PlayerId(opp, 1)
                self._check(i, stopper == PlayerId(opp, 1), "only the opponent goalie (unum 1) saves")
            else:
                self._check(i, e.other is not None and e.other.side is opp and e.other.unum != 1,
                            "a block needs an opposing field player")
                stopper = e.other
            n = e.travel or max(2, k - 2)
            self._check(i, 1 <= n <= k, "stop must happen before the goal line")
            sp, sv = self.roll(T + n, plan.cursor)
            self._check(i, sv.norm() * self.d > self.params.epsilon_touch, "ball too slow to stop visibly")
            self._kick(plan, T + n, stopper, sp, Vec2(0.0, 0.0), trap_from=sv)
            if e.outcome == "saved":
                plan.commands[-1] = (T + n, stopper, "(catch 0)")
                plan.playmodes.append((T + n + 1, f"goalie_catch_ball_{opp.value}"))
                plan.playmodes.append((T + n + 3, f"free_kick_{opp.value}"))
                plan.ready = T + n + 4
                plan.live = False
                plan.restart = opp
            else:
                plan.ready = T + n + 1
                plan.live = True
            label["end_time"] = T + n
        label.setdefault("end_time", t_line)
        plan.label = label
        if e.outcome == "saved":
            plan.extra_labels.append({"kind": "catch", "time": label["end_time"],
                                      "player": PlayerId(opp, 1).label, "success": True})

    def _tackle(self, i, e: ScriptedEvent, bp, bv, plan: _Plan):
        self._check(i, e.outcome in BINARY_OUTCOMES, f"bad tackle outcome {e.outcome!r}")
        T = e.time
        if e.outcome == "success":
            self._check(i, e.target is not None, "successful tackle needs a direction target")
            speed = e.speed or 1.2
            self._check(i, self.params.min_pass_speed <= speed < self.params.shot_min_speed,
                        "tackle knock speed out of range")
            v = _unit(e.target - bp) * speed
            self._check(i, self.rest_inside(bp, v, 0.5), "tackled ball leaves the field")
            plan.actions[T] = ("kick", v)
            plan.cursor = (T + 1, bp + v, v * self.d)
            plan.keys.append((e.actor, T, bp - _unit(v) * TACKLE_OFFSET_HIT))
            plan.ready = T + 1
        else:
            plan.keys.append((e.actor, T, bp + Vec2(0.0, TACKLE_OFFSET_MISS if bp.y < 0 else -TACKLE_OFFSET_MISS)))
            plan.cursor = self.cursor
            plan.ready = T + 2
        plan.commands.append((T, e.actor, "(tackle 100)"))
        plan.live = True
        plan.restart = self.restart
        plan.label = {"kind": "tackle", "time": T, "player": e.actor.label,
                      "success": e.outcome == "success"}

    def _catch(self, i, e: ScriptedEvent, bp, bv, plan: _Plan):
        self._check(i, e.outcome in BINARY_OUTCOMES, f"bad catch outcome {e.outcome!r}")
        self._check(i, e.actor.unum == 1, "only the goalie (unum 1) catches")
        T = e.time
        side = e.actor.side
        if e.outcome == "success":
            if bv.norm() * self.d > self.params.epsilon_touch:
                self._kick(plan, T, e.actor, bp, Vec2(0.0, 0.0), trap_from=bv)
                plan.commands[-1] = (T, e.actor, "(catch 0)")
            else:
                # a (near-)resting ball is simply picked up: no kinematic trace
                self._check(i, bv.norm() == 0.0, "ball creeping too slowly to catch cleanly")
                plan.keys.append((e.actor, T, bp + Vec2(TOUCH_OFFSET, 0.0)))
                plan.commands.append((T, e.actor, "(catch 0)"))
                plan.cursor = self.cursor
            plan.playmodes.append((T + 1, f"goalie_catch_ball_{side.value}"))
            plan.playmodes.append((T + 3, f"free_kick_{side.value}"))
            plan.ready = T + 4
            plan.live = False
            plan.restart = side
        else:
            plan.keys.append((e.actor, T, bp + Vec2(CATCH_OFFSET_MISS, 0.0)))
            plan.commands.append((T, e.actor, "(catch 0)"))
            plan.cursor = self.cursor
            plan.ready = T + 2
            plan.live = True
            plan.restart = self.restart
        plan.label = {"kind": "catch", "time": T, "player": e.actor.label,
                      "success": e.outcome == "success"}

    # -- rendering
    def render(self, cycles: int, rng: random.Random, with_rcl: bool,
               team_l: str, team_r: str, initial_vel: Vec2) -> tuple[str, str | None]:
        spec = self.spec
        players = all_players()
        times = np.arange(cycles, dtype=float)
        pos = {}
        for pid in players:
            ks = sorted(self.keys[pid], key=lambda k: k[0])
            kt = np.array([k[0] for k in ks], dtype=float)
            # projecting onto the pitch never moves a player away from an in-field ball
            # players are written at 4 decimals like server logs; the ball stays exact
            xs = np.clip(np.interp(times, kt, [k[1].x for k in ks]), -spec.half_length, spec.half_length)
            ys = np.clip(np.interp(times, kt, [k[1].y for k in ks]), -spec.half_width, spec.half_width)
            xs, ys = np.round(xs, 4), np.round(ys, 4)
            pos[pid] = (xs.tolist(), ys.tolist())

        # command stream: scripted commands plus dash/turn chatter
        cmds_by_t: dict[int, list] = {}
        for t, pid, text in self.commands:
            cmds_by_t.setdefault(t, []).append((pid, text))
        for t in range(cycles - 1):
            for pid in players:
                xs, ys = pos[pid]
                if abs(xs[t + 1] - xs[t]) + abs(ys[t + 1] - ys[t]) > 1e-9:
                    cmds_by_t.setdefault(t, []).append((pid, "(dash 100)"))
            if t % 3 == 0:
                cmds_by_t.setdefault(t, []).append((rng.choice(players), f"(turn {rng.randint(-90, 90)})"))
            if t % 7 == 0:
                cmds_by_t.setdefault(t, []).append((rng.choice(players), f"(turn_neck {rng.randint(-90, 90)})"))
            if t % 50 == 0:
                cmds_by_t.setdefault(t, []).append((rng.choice(players), '(say "synthetic")'))
        counter_idx = {name: k for k, name in enumerate(COUNT_NAMES)}
        cmd_name = lambda text: text[1:].split()[0].rstrip(")")

        pm_by_t: dict[int, list] = {}
        for t, tok in self.playmodes:
            pm_by_t.setdefault(t, []).append(tok)
        team_by_t = {t: (sl, sr) for t, sl, sr in self.teams}

        entries: list = [RawParam("server_param", _server_param_line(spec)),
                         RawParam("player_param", "(player_param (player_types 18)(subs_max 3))"),
                         TeamInfo(0, team_l, team_r, 0, 0)]
        counts = {pid: [0] * 11 for pid in players}
        bpos = self.cursor_initial_pos = Vec2(0.0, 0.0)
        bvel = initial_vel
        prev_body = {pid: (0.0 if pid.side is Side.LEFT else 180.0) for pid in players}
        d = spec.ball_decay
        for t in range(cycles):
            for tok in pm_by_t.get(t, ()):
                entries.append(PlayModeChange(t, parse_playmode(tok)))
            if t in team_by_t and t > 0:
                entries.append(TeamInfo(t, team_l, team_r, *team_by_t[t]))
            snaps = []
            for pid in players:
                xs, ys = pos[pid]
                vx = round(xs[t] - xs[t - 1], 4) if t else 0.0
                vy = round(ys[t] - ys[t - 1], 4) if t else 0.0
                if abs(vx) + abs(vy) > 1e-9:
                    prev_body[pid] = round(math.degrees(math.atan2(vy, vx)), 2)
                snaps.append(PlayerSnapshot(
                    id=pid, type_id=0, state_flags=0x9 if pid.unum == 1 else 0x1,
                    pos=Vec2(xs[t], ys[t]), vel=Vec2(vx, vy), body_dir=prev_body[pid], neck_dir=0.0,
                    view_quality="h", view_width=90.0, stamina=8000.0, effort=1.0, recovery=1.0,
                    stamina_capacity=130600.0, counts=tuple(counts[pid])))
            entries.append(ShowFrame(t, BallSnapshot(bpos, bvel), tuple(snaps)))
            for pid, text in cmds_by_t.get(t, ()):
                k = counter_idx.get(cmd_name(text))
                if k is not None:
                    counts[pid][k] += 1
            act = self.actions.get(t)
            if act is None:
                bpos = Vec2(bpos.x + bvel.x, bpos.y + bvel.y)
                bvel = Vec2(bvel.x * d, bvel.y * d)
            elif act[0] == "kick":
                v = act[1]
                bpos = Vec2(bpos.x + v.x, bpos.y + v.y)
                bvel = Vec2(v.x * d, v.y * d)
            else:
                bpos, bvel = act[1], Vec2(0.0, 0.0)
        rcg = dumps_rcg(entries, 5)
        if not with_rcl:
            return rcg, None
        lines = []
        names = {Side.LEFT: team_l, Side.RIGHT: team_r}
        for t in range(cycles):
            for tok in pm_by_t.get(t, ()):
                lines.append(f"{t},0\t(referee {tok})")
            for pid, text in cmds_by_t.get(t, ()):
                lines.append(f"{t},0\tRecv {names[pid.side]}_{pid.unum}: {text}")
        return rcg, "\n".join(lines) + "\n"


def _server_param_line(spec: FieldSpec) -> str:
    return ("(server_param (goal_width {gw})(ball_decay {bd})(player_size 0.3)(ball_size 0.085)"
            "(kickable_margin {km})(tackle_dist {td})(ball_speed_max 3)(catchable_area_l 1.2)"
            "(catchable_area_w 1))").format(
        gw=repr(spec.goal_half_width * 2), bd=repr(spec.ball_decay),
        km=repr(round(spec.kickable_area - 0.385, 10)), td=repr(spec.tackle_dist))


def _initial_ball_velocity(rng: random.Random, script: Sequence[ScriptedEvent]) -> Vec2:
    if script:
        return Vec2(0.0, 0.0)
    ang = rng.uniform(0, 2 * math.pi)
    sp = rng.uniform(0.8, 1.6)
    return Vec2(sp * math.cos(ang), sp * math.sin(ang))


def generate_match(script: Sequence[ScriptedEvent], seed: int = 0, cycles: int = 300,
                   spec: FieldSpec = FieldSpec(), with_rcl: bool = True,
                   team_l: str = "SynthL", team_r: str = "SynthR") -> GeneratedMatch:
    """Realise ``script`` as rcg/rcl text plus the label list."""
    b = _Builder(spec)
    last = -1
    for i, e in enumerate(script):
        if e.time <= last:
            raise UnrealizableScript(i, "event times must be strictly increasing")
        last = e.time
        try:
            plan = b.apply(i, e)
        except ValueError as exc:
            if isinstance(exc, UnrealizableScript):
                raise
            raise UnrealizableScript(i, str(exc)) from None
        b.commit(plan)
    if script:
        end = b.ready + 5
        if end >= cycles:
            raise UnrealizableScript(len(script) - 1, f"script needs at least {end + 1} cycles, got {cycles}")
        b.playmodes.append((cycles - 1, "time_over"))
    rng = random.Random(seed)
    rcg, rcl = b.render(cycles, rng, with_rcl, team_l, team_r, _initial_ball_velocity(rng, script))
    return GeneratedMatch(rcg, rcl, list(b.labels), list(script))


# ------------------------------------------------------ random scripts

def random_script(seed: int, cycles: int, spec: FieldSpec = FieldSpec(),
                  mix: dict | None = None) -> list[ScriptedEvent]:
    """Sample a realizable script filling ``cycles`` (deterministic per seed)."""
    rng = random.Random(seed)
    b = _Builder(spec)
    weights = mix or {"completed": 40, "intercepted": 10, "out_of_play": 7, "expired": 4,
                      "shot": 16, "tackle": 14, "catch": 6}
    events: list[ScriptedEvent] = []
    holder: PlayerId | None = None
    horizon = cycles - 60
    attempts = 0
    while b.ready < horizon and attempts < 20000:
        attempts += 1
        T = b.ready + rng.randint(0, 4)
        bp, bv = b.roll(T)
        if not b.live:
            side = b.restart or rng.choice((Side.LEFT, Side.RIGHT))
            actor = holder if holder is not None and holder.side is side else _nearest(bp, side, b, T)
            kinds = ["completed"]
        else:
            actor = holder or _nearest(bp, rng.choice((Side.LEFT, Side.RIGHT)), b, T)
            kinds = list(weights)
        kind = rng.choices(kinds, weights=[weights[k] for k in kinds])[0]
        e = _sample_event(rng, kind, T, actor, bp, b, spec)
        if e is None:
            continue
        try:
            plan = b.apply(len(events), e)
        except UnrealizableScript:
            continue
        if plan.ready >= horizon:
            continue
        b.commit(plan)
        events.append(e)
        holder = _next_holder(e, actor, holder)
    return events


def _nearest(bp: Vec2, side: Side, b: _Builder, t: int) -> PlayerId:
    cands = [PlayerId(side, u) for u in range(2, 12)]
    return min(cands, key=lambda p: (_key_pos(b, p, t).dist(bp), p.unum))


def _key_pos(b: _Builder, pid: PlayerId, t: int) -> Vec2:
    # committed keyframes are appended in time order and all precede ``t``
    return b.keys[pid][-1][1]


def _next_holder(e: ScriptedEvent, actor: PlayerId, holder):
    if e.kind == "pass":
        return e.other if e.outcome in ("completed", "intercepted") else None
    if e.kind == "shot":
        if e.outcome == "blocked":
            return e.other
        if e.outcome == "saved":
            return PlayerId(actor.side.opposite, 1)
        return None
    if e.kind == "tackle":
        return None if e.outcome == "success" else holder
    if e.kind == "catch":
        return e.actor if e.outcome == "success" else holder
    return holder


def _sample_event(rng: random.Random, kind: str, T: int, actor: PlayerId, bp: Vec2,
                  b: _Builder, spec: FieldSpec) -> ScriptedEvent | None:
    side = actor.side
    fwd = 1.0 if side is Side.LEFT else -1.0
    hl, hw = spec.half_length, spec.half_width
    goal_dist = abs(fwd * hl - bp.x)
    if kind == "shot" and goal_dist > 35:
        kind = "completed"
    if kind in ("completed", "intercepted"):
        for _ in range(20):
            dist = rng.uniform(8.0, 24.0)
            ang = rng.gauss(0.0, 0.9)
            tgt = Vec2(bp.x + fwd * dist * math.cos(ang), bp.y + dist * math.sin(ang))
            if b.inside(tgt, 2.0) and abs(tgt.x) < hl - 8:
                break
        else:
            return None
        if kind == "completed":
            other = PlayerId(side, rng.choice([u for u in range(2, 12) if u != actor.unum]))
        else:
            other = PlayerId(side.opposite, rng.randint(2, 11))
        return ScriptedEvent("pass", T, actor, kind, other, tgt, travel=max(4, round(dist / 1.6)))
    if kind == "out_of_play":
        ys = math.copysign(hw + 5.0, bp.y if bp.y else 1.0)
        tgt = Vec2(bp.x + fwd * rng.uniform(-6, 10), ys)
        return ScriptedEvent("pass", T, actor, "out_of_play", None, tgt, speed=round(rng.uniform(1.6, 2.6), 3))
    if kind == "expired":
        tgt = Vec2(-bp.x * 0.3, -bp.y * 0.3)  # toward the middle keeps it in play
        if tgt.dist(bp) < 1:
            tgt = Vec2(bp.x + fwd * 5.0, bp.y)
        return ScriptedEvent("pass", T, actor, "expired", None, tgt, speed=round(rng.uniform(0.6, 0.9), 3))
    if kind == "shot":
        outcome = rng.choices(SHOT_OUTCOMES, weights=[30, 30, 20, 20])[0]
        if outcome == "off_target":
            y = rng.choice((-1, 1)) * rng.uniform(spec.goal_half_width + 0.35, spec.goal_half_width + 0.65)
        else:
            y = rng.uniform(-spec.goal_half_width + 1.0, spec.goal_half_width - 1.0)
        other = None
        travel = None
        if outcome == "blocked":
            other = PlayerId(side.opposite, rng.randint(2, 11))
            travel = rng.randint(2, 5)
        elif outcome == "saved":
            travel = None
        return ScriptedEvent("shot", T, actor, outcome, other, Vec2(fwd * hl, y), travel,
                             speed=round(rng.uniform(2.2, 3.0), 3))
    if kind == "tackle":
        tackler = PlayerId(side.opposite, rng.randint(2, 11))
        if rng.random() < 0.6:
            tgt = Vec2(rng.uniform(-hl / 3, hl / 3), rng.uniform(-hw / 3, hw / 3))
            if tgt.dist(bp) < 1:
                return None
            return ScriptedEvent("tackle", T, tackler, "success", None, tgt, speed=round(rng.uniform(0.8, 1.3), 3))
        return ScriptedEvent("tackle", T, tackler, "failure")
    if kind == "catch":
        keeper_side = Side.LEFT if bp.x < 0 else Side.RIGHT
        keeper = PlayerId(keeper_side, 1)
        _, bv = b.roll(T)
        if rng.random() < 0.6 and (bv.norm() > 0.2 or bv.norm() == 0.0):
            return ScriptedEvent("catch", T, keeper, "success")
        return ScriptedEvent("catch", T, keeper, "failure")
    return None


def load_script(text: str) -> tuple[list[ScriptedEvent], int | None]:
    doc = json.loads(text)
    if isinstance(doc, list):
        return [ScriptedEvent.from_dict(d) for d in doc], None
    return [ScriptedEvent.from_dict(d) for d in doc.get("events", [])], doc.get("cycles")


def dump_script(script: Sequence[ScriptedEvent], cycles: int | None = None) -> str:
    doc: dict = {"events": [e.to_dict() for e in script]}
    if cycles is not None:
        doc["cycles"] = cycles
    return json.dumps(doc, indent=1) + "\n"
