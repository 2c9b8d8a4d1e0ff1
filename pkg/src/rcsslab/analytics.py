"""Per-team, per-player and per-region statistics built from an EventLog."""

from __future__ import annotations

import bisect
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .events import CatchRecord, EventLog, PassEvent, ShotEvent, TackleRecord, Touch
from .model import PlayerId, Region, Side, Vec2, all_players, point_in_region
from .rcg import MatchRecord

ACTION_KINDS = ("shots", "passes", "tackles", "catches", "turns", "kicks", "dashes")
# kinds whose attempts can succeed or fail
SCORED_KINDS = ("shots", "passes", "tackles", "catches")
REGION_KINDS = ("kicks", "passes", "shots", "tackles", "catches")


# ---------------------------------------------------------------- possession

@dataclass(frozen=True)
class PossessionReport:
    scope: Region | None
    cycles_considered: int
    left_share: Fraction
    right_share: Fraction
    contested_share: Fraction
    per_player: dict[PlayerId, Fraction] = field(default_factory=dict)

    def side_share(self, side: Side) -> Fraction:
        return self.left_share if side is Side.LEFT else self.right_share


def live_cycles(match: MatchRecord) -> list[int]:
    """Cycles with a show frame while the playmode is play_on."""
    out = []
    for f in match.frames:
        mode = match.playmode_at(f.time)
        if mode is not None and mode.is_play_on:
            out.append(f.time)
    return out


def possession_timeline(match: MatchRecord, touches: Iterable[Touch],
                        region: Region | None = None) -> dict[int, PlayerId | None]:
    """Owner of every considered cycle: the player of the latest effective touch, None if none yet."""
    eff = sorted((t for t in touches if t.effective), key=lambda t: t.time)
    times = [t.time for t in eff]
    frames = match.frame_index
    out: dict[int, PlayerId | None] = {}
    for t in live_cycles(match):
        if region is not None and not point_in_region(frames[t].ball.pos, region):
            continue
        i = bisect.bisect_right(times, t)
        out[t] = eff[i - 1].player if i else None
    return out


def possession(match: MatchRecord, touches: Iterable[Touch], region: Region | None = None) -> PossessionReport:
    """Attribute each play_on cycle to the side and player of the latest touch at or before it.

    Cycles before any touch are contested. An empty scope gives a degenerate
    report (contested = 1) instead of an error.
    """
    timeline = possession_timeline(match, touches, region)
    considered = len(timeline)
    if considered == 0:
        return PossessionReport(region, 0, Fraction(0), Fraction(0), Fraction(1), {})
    owners = Counter(timeline.values())
    contested = owners.pop(None, 0)
    per_player = {p: Fraction(n, considered) for p, n in sorted(owners.items())}
    left = sum(n for p, n in owners.items() if p.side is Side.LEFT)
    right = sum(n for p, n in owners.items() if p.side is Side.RIGHT)
    return PossessionReport(region, considered, Fraction(left, considered), Fraction(right, considered),
                            Fraction(contested, considered), per_player)


# ---------------------------------------------------------------- per player

@dataclass(frozen=True)
class ActionStats:
    count: int = 0
    successes: int | None = None  # None for kinds without an outcome

    def __post_init__(self):
        if self.count < 0 or (self.successes is not None and not 0 <= self.successes <= self.count):
            raise ValueError(f"invalid action stats {self.count}/{self.successes}")

    @property
    def accuracy(self) -> Fraction | None:
        if self.successes is None or self.count == 0:
            return None
        return Fraction(self.successes, self.count)

    def __add__(self, other: ActionStats) -> ActionStats:
        if self.successes is None and other.successes is None:
            succ = None
        else:
            succ = (self.successes or 0) + (other.successes or 0)
        return ActionStats(self.count + other.count, succ)


def _empty_actions() -> dict[str, ActionStats]:
    return {k: ActionStats(0, 0 if k in SCORED_KINDS else None) for k in ACTION_KINDS}


@dataclass(frozen=True)
class PlayerStats:
    player: PlayerId
    actions: dict[str, ActionStats] = field(default_factory=_empty_actions)

    def __getitem__(self, kind: str) -> ActionStats:
        return self.actions[kind]


def player_stats(events: EventLog, player: PlayerId) -> PlayerStats:
    """Counts and successes for one player.

    Shots succeed when on target (goal or saved). Turns, dashes and kicks come
    from received rcl commands; without a command log, kicks fall back to
    effective kick touches and turns/dashes stay zero.
    """
    passes = [p for p in events.passes if p.kicker == player]
    shots = [s for s in events.shots if s.shooter == player]
    tackles = [t for t in events.tackles if t.player == player]
    catches = [c for c in events.catches if c.player == player]
    cmd = events.command_counts.get(player, {})
    if events.has_commands:
        kicks = cmd.get("kick", 0)
    else:
        kicks = sum(1 for t in events.touches if t.effective and t.kind == "kick" and t.player == player)
    acts = {
        "shots": ActionStats(len(shots), sum(s.on_target for s in shots)),
        "passes": ActionStats(len(passes), sum(p.outcome == "completed" for p in passes)),
        "tackles": ActionStats(len(tackles), sum(t.success for t in tackles)),
        "catches": ActionStats(len(catches), sum(c.success for c in catches)),
        "turns": ActionStats(cmd.get("turn", 0)),
        "kicks": ActionStats(kicks),
        "dashes": ActionStats(cmd.get("dash", 0)),
    }
    return PlayerStats(player, acts)


def team_totals(stats: Iterable[PlayerStats]) -> dict[str, ActionStats]:
    total = _empty_actions()
    for ps in stats:
        for k in ACTION_KINDS:
            total[k] = total[k] + ps.actions[k]
    return total


# ---------------------------------------------------------------- regions

def event_anchors(events: EventLog) -> dict[str, list[Vec2]]:
    """Anchor position of every event, per kind, used for region membership."""
    return {
        "kicks": [t.ball_pos for t in events.touches if t.effective and t.kind == "kick"],
        "passes": [p.origin for p in events.passes],
        "shots": [s.origin for s in events.shots],
        "tackles": [t.ball_pos for t in events.tackles if t.ball_pos is not None],
        "catches": [c.ball_pos for c in events.catches if c.ball_pos is not None],
    }


def region_event_counts(events: EventLog, region: Region) -> dict[str, int]:
    return {k: sum(1 for p in pts if point_in_region(p, region))
            for k, pts in event_anchors(events).items()}


# ---------------------------------------------------------------- report

@dataclass(frozen=True)
class TeamSummary:
    side: Side
    name: str
    score: int
    actions: dict[str, ActionStats]


@dataclass(frozen=True)
class RegionReport:
    region: Region
    possession: PossessionReport
    counts: dict[str, int]


@dataclass(frozen=True)
class MatchReport:
    meta: dict
    teams: tuple[TeamSummary, TeamSummary]
    players: dict[PlayerId, PlayerStats]
    possession: PossessionReport
    regions: tuple[RegionReport, ...] = ()
    passes: tuple[PassEvent, ...] = ()
    shots: tuple[ShotEvent, ...] = ()
    tackles: tuple[TackleRecord, ...] = ()
    catches: tuple[CatchRecord, ...] = ()

    def to_dict(self) -> dict:
        return report_to_dict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> MatchReport:
        return report_from_dict(d)

    @classmethod
    def from_json(cls, text: str) -> MatchReport:
        return report_from_dict(json.loads(text))


def build_report(match: MatchRecord, events: EventLog, regions: Iterable[Region] = (),
                 player: PlayerId | None = None, source: str | None = None,
                 rcl_skipped: int | None = None) -> MatchReport:
    """Aggregate one match. ``player`` restricts the per-player section, not the team totals."""
    stats = {p: player_stats(events, p) for p in all_players()}
    info = match.team_info
    names = (info.name_l, info.name_r) if info else ("", "")
    scores = (info.score_l, info.score_r) if info else (0, 0)
    teams = tuple(
        TeamSummary(side, names[k], scores[k], team_totals(s for p, s in stats.items() if p.side is side))
        for k, side in enumerate((Side.LEFT, Side.RIGHT))
    )
    touches = events.touches
    regs = tuple(RegionReport(r, possession(match, touches, r), region_event_counts(events, r)) for r in regions)
    meta = {
        "source": source,
        "version": match.version,
        "frames": len(match.frames),
        "cycles": match.frames[-1].time + 1 if match.frames else 0,
        "play_on_cycles": len(live_cycles(match)),
        "skipped_lines": match.skipped,
        "rcl_skipped_lines": rcl_skipped,
        "has_commands": events.has_commands,
    }
    shown = {player: stats[player]} if player is not None else stats
    return MatchReport(meta, teams, shown, possession(match, touches), regs,
                       events.passes, events.shots, events.tackles, events.catches)


# ------------------------------------------------------------ serialization

def share_to_dict(q: Fraction) -> dict:
    return {"value": f"{float(q):.4f}", "num": q.numerator, "den": q.denominator}


def share_from_dict(d: dict) -> Fraction:
    return Fraction(d["num"], d["den"])


def _actions_to_dict(acts: dict[str, ActionStats]) -> dict:
    out = {}
    for k in ACTION_KINDS:
        a = acts[k]
        acc = a.accuracy
        out[k] = {"count": a.count, "successes": a.successes,
                  "accuracy": None if acc is None else share_to_dict(acc)}
    return out


def _actions_from_dict(d: dict) -> dict[str, ActionStats]:
    return {k: ActionStats(d[k]["count"], d[k]["successes"]) for k in ACTION_KINDS}


def _possession_to_dict(p: PossessionReport) -> dict:
    return {
        "scope": None if p.scope is None else p.scope.as_list(),
        "cycles_considered": p.cycles_considered,
        "left": share_to_dict(p.left_share),
        "right": share_to_dict(p.right_share),
        "contested": share_to_dict(p.contested_share),
        "per_player": {pid.label: share_to_dict(q) for pid, q in p.per_player.items()},
    }


def _possession_from_dict(d: dict) -> PossessionReport:
    return PossessionReport(
        None if d["scope"] is None else Region.from_corners(*d["scope"]),
        d["cycles_considered"],
        share_from_dict(d["left"]), share_from_dict(d["right"]), share_from_dict(d["contested"]),
        {PlayerId.parse(k): share_from_dict(v) for k, v in d["per_player"].items()},
    )


def _vec(v: Vec2 | None):
    return None if v is None else [v.x, v.y]


def _unvec(v) -> Vec2 | None:
    return None if v is None else Vec2(float(v[0]), float(v[1]))


def _pid(p: PlayerId | None):
    return None if p is None else p.label


def _unpid(s) -> PlayerId | None:
    return None if s is None else PlayerId.parse(s)


def report_to_dict(r: MatchReport) -> dict:
    return {
        "meta": dict(r.meta),
        "teams": {
            t.side.value: {"name": t.name, "score": t.score, "actions": _actions_to_dict(t.actions)}
            for t in r.teams
        },
        "players": {pid.label: _actions_to_dict(ps.actions) for pid, ps in sorted(r.players.items())},
        "possession": _possession_to_dict(r.possession),
        "regions": [
            {"region": rr.region.as_list(), "possession": _possession_to_dict(rr.possession),
             "counts": dict(rr.counts)}
            for rr in r.regions
        ],
        "events": {
            "passes": [{"kicker": _pid(p.kicker), "receiver": _pid(p.receiver), "start_time": p.start_time,
                        "end_time": p.end_time, "outcome": p.outcome, "origin": _vec(p.origin)}
                       for p in r.passes],
            "shots": [{"shooter": _pid(s.shooter), "time": s.time, "target_goal": s.target_goal.value,
                       "outcome": s.outcome, "origin": _vec(s.origin)} for s in r.shots],
            "tackles": [{"player": _pid(t.player), "time": t.time, "success": t.success,
                         "ball_pos": _vec(t.ball_pos)} for t in r.tackles],
            "catches": [{"player": _pid(c.player), "time": c.time, "success": c.success,
                         "ball_pos": _vec(c.ball_pos)} for c in r.catches],
        },
    }


def report_from_dict(d: dict) -> MatchReport:
    teams = tuple(
        TeamSummary(Side.parse(k), v["name"], v["score"], _actions_from_dict(v["actions"]))
        for k, v in d["teams"].items()
    )
    players = {}
    for label, acts in d["players"].items():
        pid = PlayerId.parse(label)
        players[pid] = PlayerStats(pid, _actions_from_dict(acts))
    ev = d["events"]
    return MatchReport(
        meta=dict(d["meta"]),
        teams=teams,
        players=players,
        possession=_possession_from_dict(d["possession"]),
        regions=tuple(RegionReport(Region.from_corners(*x["region"]), _possession_from_dict(x["possession"]),
                                   dict(x["counts"])) for x in d["regions"]),
        passes=tuple(PassEvent(_unpid(p["kicker"]), _unpid(p["receiver"]), p["start_time"], p["end_time"],
                               p["outcome"], _unvec(p["origin"])) for p in ev["passes"]),
        shots=tuple(ShotEvent(_unpid(s["shooter"]), s["time"], Side.parse(s["target_goal"]), s["outcome"],
                              _unvec(s["origin"])) for s in ev["shots"]),
        tackles=tuple(TackleRecord(t["time"], _unpid(t["player"]), t["success"], _unvec(t["ball_pos"]))
                      for t in ev["tackles"]),
        catches=tuple(CatchRecord(c["time"], _unpid(c["player"]), c["success"], _unvec(c["ball_pos"]))
                      for c in ev["catches"]),
    )


_SHARE = {
    "type": "object",
    "required": ["value", "num", "den"],
    "properties": {
        "value": {"type": "string", "pattern": r"^\d+\.\d{4}$"},
        "num": {"type": "integer", "minimum": 0},
        "den": {"type": "integer", "minimum": 1},
    },
}
_ACTION = {
    "type": "object",
    "required": ["count", "successes", "accuracy"],
    "properties": {
        "count": {"type": "integer", "minimum": 0},
        "successes": {"type": ["integer", "null"], "minimum": 0},
        "accuracy": {"oneOf": [{"type": "null"}, _SHARE]},
    },
}
_ACTIONS = {"type": "object", "required": list(ACTION_KINDS),
            "properties": {k: _ACTION for k in ACTION_KINDS}}
_PLAYER_KEY = r"^[lr]([1-9]|1[01])$"
_POSSESSION = {
    "type": "object",
    "required": ["scope", "cycles_considered", "left", "right", "contested", "per_player"],
    "properties": {
        "scope": {"oneOf": [{"type": "null"},
                            {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}]},
        "cycles_considered": {"type": "integer", "minimum": 0},
        "left": _SHARE, "right": _SHARE, "contested": _SHARE,
        "per_player": {"type": "object", "patternProperties": {_PLAYER_KEY: _SHARE},
                       "additionalProperties": False},
    },
}
_POINT = {"oneOf": [{"type": "null"},
                    {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}
_PID = {"type": ["string", "null"], "pattern": _PLAYER_KEY}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "match report",
    "type": "object",
    "required": ["meta", "teams", "players", "possession", "regions", "events"],
    "additionalProperties": False,
    "properties": {
        "meta": {"type": "object", "required": ["version", "cycles", "skipped_lines"]},
        "teams": {
            "type": "object", "required": ["l", "r"],
            "properties": {s: {"type": "object", "required": ["name", "score", "actions"],
                               "properties": {"name": {"type": "string"},
                                              "score": {"type": "integer", "minimum": 0},
                                              "actions": _ACTIONS}}
                           for s in ("l", "r")},
        },
        "players": {"type": "object", "patternProperties": {_PLAYER_KEY: _ACTIONS},
                    "additionalProperties": False},
        "possession": _POSSESSION,
        "regions": {"type": "array", "items": {
            "type": "object", "required": ["region", "possession", "counts"],
            "properties": {"region": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                           "possession": _POSSESSION,
                           "counts": {"type": "object", "required": list(REGION_KINDS),
                                      "additionalProperties": {"type": "integer", "minimum": 0}}}}},
        "events": {
            "type": "object", "required": ["passes", "shots", "tackles", "catches"],
            "properties": {
                "passes": {"type": "array", "items": {"type": "object", "properties": {
                    "kicker": _PID, "receiver": _PID, "start_time": {"type": "integer"},
                    "end_time": {"type": "integer"}, "origin": _POINT,
                    "outcome": {"enum": ["completed", "intercepted", "out_of_play", "expired"]}}}},
                "shots": {"type": "array", "items": {"type": "object", "properties": {
                    "shooter": _PID, "time": {"type": "integer"}, "target_goal": {"enum": ["l", "r"]},
                    "origin": _POINT, "outcome": {"enum": ["goal", "saved", "off_target", "blocked"]}}}},
                "tackles": {"type": "array", "items": {"type": "object", "properties": {
                    "player": _PID, "time": {"type": "integer"}, "success": {"type": "boolean"}}}},
                "catches": {"type": "array", "items": {"type": "object", "properties": {
                    "player": _PID, "time": {"type": "integer"}, "success": {"type": "boolean"}}}},
            },
        },
    },
}


# ------------------------------------------------------------ text render

def _pct(q: Fraction | None) -> str:
    return "-" if q is None else f"{float(q) * 100:.1f}%"


def _acc_cell(a: ActionStats) -> str:
    if a.successes is None:
        return str(a.count)
    return f"{a.count} ({a.successes} ok, {_pct(a.accuracy)})"


def render_text(r: MatchReport) -> str:
    lines = []
    m = r.meta
    lines.append("MATCH")
    if m.get("source"):
        lines.append(f"  source: {m['source']}")
    lines.append(f"  rcg version {m['version']}, {m['frames']} frames, {m['play_on_cycles']} play_on cycles")
    if m.get("skipped_lines"):
        lines.append(f"  skipped rcg lines: {m['skipped_lines']}")
    if m.get("rcl_skipped_lines"):
        lines.append(f"  skipped rcl lines: {m['rcl_skipped_lines']}")
    if not m.get("frames"):
        lines.append("")
        lines.append("no data")
        return "\n".join(lines) + "\n"
    left, right = r.teams
    lines.append(f"  {left.name or 'left'} {left.score} - {right.score} {right.name or 'right'}")
    lines.append("")
    lines.append(_possession_block("POSSESSION", r.possession))
    lines.append("")
    lines.append("TEAMS")
    header = f"  {'kind':<8}{'left':>28}{'right':>28}"
    lines.append(header)
    for k in ACTION_KINDS:
        lines.append(f"  {k:<8}{_acc_cell(left.actions[k]):>28}{_acc_cell(right.actions[k]):>28}")
    lines.append("")
    lines.append("PLAYERS")
    lines.append("  " + f"{'id':<5}" + "".join(f"{k:>9}" for k in ACTION_KINDS) + f"{'pass acc':>10}{'shot acc':>10}")
    for pid, ps in sorted(r.players.items()):
        row = f"  {pid.label:<5}" + "".join(f"{ps.actions[k].count:>9}" for k in ACTION_KINDS)
        row += f"{_pct(ps.actions['passes'].accuracy):>10}{_pct(ps.actions['shots'].accuracy):>10}"
        lines.append(row)
    for rr in r.regions:
        lines.append("")
        x0, y0, x1, y1 = rr.region.as_list()
        title = f"REGION [{x0:g}, {x1:g}] x [{y0:g}, {y1:g}]"
        lines.append(_possession_block(title, rr.possession))
        lines.append("  events: " + ", ".join(f"{k} {rr.counts[k]}" for k in REGION_KINDS))
    lines.append("")
    outcomes: dict[str, int] = {}
    for p in r.passes:
        outcomes[p.outcome] = outcomes.get(p.outcome, 0) + 1
    lines.append("EVENTS")
    lines.append(f"  passes {len(r.passes)}: " + ", ".join(f"{k} {v}" for k, v in sorted(outcomes.items())))
    so: dict[str, int] = {}
    for s in r.shots:
        so[s.outcome] = so.get(s.outcome, 0) + 1
    lines.append(f"  shots {len(r.shots)}: " + ", ".join(f"{k} {v}" for k, v in sorted(so.items())))
    lines.append(f"  tackles {len(r.tackles)} ({sum(t.success for t in r.tackles)} won), "
                 f"catches {len(r.catches)} ({sum(c.success for c in r.catches)} held)")
    return "\n".join(lines) + "\n"


def _possession_block(title: str, p: PossessionReport) -> str:
    if p.cycles_considered == 0:
        return f"{title}\n  no data (0 cycles in scope)"
    return (f"{title}\n  cycles {p.cycles_considered}: left {_pct(p.left_share)}, "
            f"right {_pct(p.right_share)}, contested {_pct(p.contested_share)}")


def render_report(r: MatchReport, fmt: str = "text") -> str:
    if fmt == "text":
        return render_text(r)
    if fmt == "json":
        return r.to_json()
    raise ValueError(f"unknown report format {fmt!r}")

