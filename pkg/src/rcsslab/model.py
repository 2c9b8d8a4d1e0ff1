"""Field geometry, shared domain types and primitive predicates."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import NamedTuple


class LogSyntaxError(ValueError):
    """A malformed line in one of the text log formats."""

    def __init__(self, line_no: int, reason: str, offset: int | None = None):
        self.line_no = line_no
        self.reason = reason
        self.offset = offset
        where = f"line {line_no}"
        if offset is not None:
            where += f", col {offset}"
        super().__init__(f"{where}: {reason}")


class Vec2(NamedTuple):
    x: float
    y: float

    def __add__(self, other):  # type: ignore[override]
        return Vec2(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Vec2(self.x - other[0], self.y - other[1])

    def __mul__(self, k):  # type: ignore[override]
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def dist(self, other) -> float:
        return math.hypot(self.x - other[0], self.y - other[1])


@dataclass(frozen=True)
class FieldSpec:
    length: float = 105.0
    width: float = 68.0
    goal_half_width: float = 7.01
    kickable_area: float = 1.085
    tackle_dist: float = 2.0
    ball_decay: float = 0.94
    # not a server parameter; max reach of the goalie catch rectangle (1.2 x 1.0)
    catchable_area: float = 1.3

    def __post_init__(self):
        for name in ("length", "width", "goal_half_width", "kickable_area",
                     "tackle_dist", "ball_decay", "catchable_area"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"FieldSpec.{name} must be positive, got {v}")
        if self.kickable_area >= self.tackle_dist:
            raise ValueError("kickable_area must be smaller than tackle_dist")

    @property
    def half_length(self) -> float:
        return self.length / 2

    @property
    def half_width(self) -> float:
        return self.width / 2

    def full_field(self) -> Region:
        return Region(Vec2(-self.half_length, -self.half_width),
                      Vec2(self.half_length, self.half_width))

    @classmethod
    def from_server_param(cls, raw: str | None, **overrides) -> FieldSpec:
        """Build a spec from a raw ``(server_param ...)`` clause.

        Keys missing from the clause keep their rcssserver defaults.
        """
        base = cls(**overrides)
        if not raw:
            return base
        vals = dict(base.__dict__)
        goal_width = param_value(raw, "goal_width")
        if goal_width is not None:
            vals["goal_half_width"] = goal_width / 2
        sizes = [param_value(raw, k) for k in ("player_size", "ball_size", "kickable_margin")]
        if all(v is not None for v in sizes):
            vals["kickable_area"] = sum(sizes)  # type: ignore[arg-type]
        for key in ("tackle_dist", "ball_decay"):
            v = param_value(raw, key)
            if v is not None:
                vals[key] = v
        vals.update(overrides)
        return cls(**vals)


def param_value(raw: str, key: str) -> float | None:
    """Look up one numeric ``(key value)`` pair in a raw param clause."""
    m = re.search(r"\(" + re.escape(key) + r"\s+([^()\s]+)\s*\)", raw)
    if not m:
        return None
    try:
        v = float(m.group(1).strip('"'))
    except ValueError:
        return None
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class Region:
    min: Vec2
    max: Vec2

    def __post_init__(self):
        if self.min.x > self.max.x or self.min.y > self.max.y:
            raise ValueError(f"invalid region {self.min} .. {self.max}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> Region:
        return cls(Vec2(min(x1, x2), min(y1, y2)), Vec2(max(x1, x2), max(y1, y2)))

    def as_list(self) -> list[float]:
        return [self.min.x, self.min.y, self.max.x, self.max.y]

    def contains(self, p) -> bool:
        return point_in_region(p, self)


def point_in_region(p, r: Region) -> bool:
    """Closed-boundary membership test."""
    return r.min.x <= p[0] <= r.max.x and r.min.y <= p[1] <= r.max.y


def kickable(player_pos, ball_pos, spec: FieldSpec) -> bool:
    return math.dist(player_pos, ball_pos) <= spec.kickable_area


class Side(enum.Enum):
    LEFT = "l"
    RIGHT = "r"
    NEUTRAL = "n"

    @property
    def opposite(self) -> Side:
        if self is Side.LEFT:
            return Side.RIGHT
        if self is Side.RIGHT:
            return Side.LEFT
        return Side.NEUTRAL

    @classmethod
    def parse(cls, token: str) -> Side:
        t = token.lower()
        if t in ("l", "left"):
            return cls.LEFT
        if t in ("r", "right"):
            return cls.RIGHT
        raise ValueError(f"not a team side: {token!r}")


@dataclass(frozen=True, order=False)
class PlayerId:
    side: Side
    unum: int

    def __post_init__(self):
        if self.side is Side.NEUTRAL:
            raise ValueError("a player belongs to the left or right team")
        if not 1 <= self.unum <= 11:
            raise ValueError(f"uniform number out of range: {self.unum}")

    @property
    def sort_key(self) -> tuple[int, int]:
        return (0 if self.side is Side.LEFT else 1, self.unum)

    def __lt__(self, other: PlayerId) -> bool:
        return self.sort_key < other.sort_key

    @property
    def label(self) -> str:
        return f"{self.side.value}{self.unum}"

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, label: str) -> PlayerId:
        m = re.fullmatch(r"([lrLR])(\d{1,2})", label.strip())
        if not m:
            raise ValueError(f"bad player label {label!r}, expected e.g. l7 or r11")
        return cls(Side.parse(m.group(1)), int(m.group(2)))


def all_players() -> list[PlayerId]:
    return [PlayerId(s, u) for s in (Side.LEFT, Side.RIGHT) for u in range(1, 12)]


class PlayModeKind(enum.Enum):
    BEFORE_KICK_OFF = "before_kick_off"
    TIME_OVER = "time_over"
    PLAY_ON = "play_on"
    KICK_OFF = "kick_off"
    KICK_IN = "kick_in"
    FREE_KICK = "free_kick"
    CORNER_KICK = "corner_kick"
    GOAL_KICK = "goal_kick"
    GOAL = "goal"
    DROP_BALL = "drop_ball"
    OFFSIDE = "offside"
    PENALTY_KICK = "penalty_kick"
    FIRST_HALF_OVER = "first_half_over"
    PAUSE = "pause"
    HUMAN_JUDGE = "human_judge"
    FOUL_CHARGE = "foul_charge"
    FOUL_PUSH = "foul_push"
    FOUL_MULTIPLE_ATTACK = "foul_multiple_attack"
    FOUL_BALLOUT = "foul_ballout"
    BACK_PASS = "back_pass"
    FREE_KICK_FAULT = "free_kick_fault"
    CATCH_FAULT = "catch_fault"
    INDIRECT_FREE_KICK = "indirect_free_kick"
    PENALTY_SETUP = "penalty_setup"
    PENALTY_READY = "penalty_ready"
    PENALTY_TAKEN = "penalty_taken"
    PENALTY_MISS = "penalty_miss"
    PENALTY_SCORE = "penalty_score"
    ILLEGAL_DEFENSE = "illegal_defense"
    PENALTY_ONFIELD = "penalty_onfield"
    PENALTY_FOUL = "penalty_foul"
    GOALIE_CATCH_BALL = "goalie_catch_ball"
    TIME_UP_WITHOUT_A_TEAM = "time_up_without_a_team"
    TIME_UP = "time_up"
    TIME_EXTENDED = "time_extended"
    HALF_TIME = "half_time"
    UNKNOWN = "unknown"


SIDELESS_KINDS = frozenset({
    PlayModeKind.BEFORE_KICK_OFF, PlayModeKind.TIME_OVER, PlayModeKind.PLAY_ON,
    PlayModeKind.DROP_BALL, PlayModeKind.FIRST_HALF_OVER, PlayModeKind.PAUSE,
    PlayModeKind.HUMAN_JUDGE, PlayModeKind.TIME_UP_WITHOUT_A_TEAM,
    PlayModeKind.TIME_UP, PlayModeKind.TIME_EXTENDED, PlayModeKind.HALF_TIME,
})

# modes that end a half or the match rather than interrupt play
END_OF_PLAY_KINDS = frozenset({
    PlayModeKind.TIME_OVER, PlayModeKind.FIRST_HALF_OVER, PlayModeKind.HALF_TIME,
    PlayModeKind.TIME_UP, PlayModeKind.TIME_UP_WITHOUT_A_TEAM,
    PlayModeKind.TIME_EXTENDED, PlayModeKind.BEFORE_KICK_OFF,
})

_KIND_BY_TOKEN = {k.value: k for k in PlayModeKind if k is not PlayModeKind.UNKNOWN}


@dataclass(frozen=True)
class PlayMode:
    kind: PlayModeKind
    side: Side = Side.NEUTRAL
    raw: str | None = None  # set only for UNKNOWN

    def render(self) -> str:
        if self.kind is PlayModeKind.UNKNOWN:
            return self.raw or "unknown"
        if self.side is Side.NEUTRAL:
            return self.kind.value
        return f"{self.kind.value}_{self.side.value}"

    def __str__(self) -> str:
        return self.render()

    @property
    def is_play_on(self) -> bool:
        return self.kind is PlayModeKind.PLAY_ON


PLAY_ON = PlayMode(PlayModeKind.PLAY_ON)


def parse_playmode(token: str) -> PlayMode:
    """Map a playmode token to a PlayMode; unknown tokens are preserved."""
    token = token.strip()
    kind = _KIND_BY_TOKEN.get(token)
    if kind is not None and kind in SIDELESS_KINDS:
        return PlayMode(kind)
    if len(token) > 2 and token[-2] == "_" and token[-1] in "lr":
        kind = _KIND_BY_TOKEN.get(token[:-2])
        if kind is not None and kind not in SIDELESS_KINDS:
            return PlayMode(kind, Side(token[-1]))
    return PlayMode(PlayModeKind.UNKNOWN, Side.NEUTRAL, token)


def known_playmode_tokens() -> list[str]:
    out = []
    for kind in PlayModeKind:
        if kind is PlayModeKind.UNKNOWN:
            continue
        if kind in SIDELESS_KINDS:
            out.append(kind.value)
        else:
            out.extend((f"{kind.value}_l", f"{kind.value}_r"))
    return out
