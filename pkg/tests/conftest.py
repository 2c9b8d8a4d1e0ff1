from __future__ import annotations

import functools

import pytest

from rcsslab.rcg import parse_rcg_text
from rcsslab.rcl import parse_rcl_text
from rcsslab.synth import generate_match, random_script


def player_clause(label: str, x: float, y: float, vx: float = 0, vy: float = 0) -> str:
    side, unum = label[0], label[1:]
    return (f"(({side} {unum}) 0 0x1 {x} {y} {vx} {vy} 0 0 (v h 90) (s 8000 1 1 130600) "
            f"(c 0 0 0 0 0 0 0 0 0 0 0))")


def show_line(t: int, ball, players: dict | None = None) -> str:
    """``ball`` is (x, y, vx, vy); ``players`` maps labels like "l3" to (x, y)."""
    bx, by, bvx, bvy = ball
    parts = [f"((b) {bx} {by} {bvx} {bvy})"]
    for label, (x, y) in (players or {}).items():
        parts.append(player_clause(label, x, y))
    return f"(show {t} {' '.join(parts)})"


def glide(t0: int, pos, vel, n: int, decay: float = 0.94):
    """Ball states for ``n`` cycles of free decay starting at cycle t0."""
    (x, y), (vx, vy) = pos, vel
    out = []
    for t in range(t0, t0 + n):
        out.append((t, (x, y, vx, vy)))
        x, y = x + vx, y + vy
        vx, vy = vx * decay, vy * decay
    return out


def kicked(t0: int, pos, kick_vel, n: int, decay: float = 0.94):
    """Ball resting at ``pos`` on cycle t0, kicked to ``kick_vel`` on that cycle."""
    first = [(t0, (pos[0], pos[1], 0.0, 0.0))]
    (vx, vy) = kick_vel
    rest = glide(t0 + 1, (pos[0] + vx, pos[1] + vy), (vx * decay, vy * decay), n - 1, decay)
    return first + rest


def build_rcg(balls, players=None, playmodes=(), teams=("LEFT", "RIGHT"), header="ULG5") -> str:
    """rcg text from ball states [(t, (x, y, vx, vy))]; ``players`` is a dict or a callable of t."""
    lines = [header]
    if teams:
        lines.append(f"(team 0 {teams[0]} {teams[1]} 0 0)")
    pms = sorted(playmodes) or [(0, "play_on")]
    if pms[0][0] > 0:
        pms.insert(0, (0, "play_on"))
    i = 0
    for t, b in balls:
        while i < len(pms) and pms[i][0] <= t:
            lines.append(f"(playmode {pms[i][0]} {pms[i][1]})")
            i += 1
        ps = players(t) if callable(players) else players
        lines.append(show_line(t, b, ps))
    lines.extend(f"(playmode {t} {m})" for t, m in pms[i:])
    return "\n".join(lines) + "\n"


def rcl_line(t: int, label: str, cmd: str, team_names=("LEFT", "RIGHT")) -> str:
    team = team_names[0] if label[0] == "l" else team_names[1]
    return f"{t},0\tRecv {team}_{label[1:]}: {cmd}"


@functools.lru_cache(maxsize=None)
def synthetic(seed: int, cycles: int = 1500, with_rcl: bool = True):
    """(generated, parsed rcg, parsed rcl) for a seeded random script; cached across tests."""
    g = generate_match(random_script(seed, cycles), seed=seed, cycles=cycles, with_rcl=with_rcl)
    match = parse_rcg_text(g.rcg, strict=True)
    cmds = parse_rcl_text(g.rcl, strict=True) if g.rcl is not None else None
    return g, match, cmds


@pytest.fixture(scope="session")
def small_match():
    return synthetic(11, 1500)


def score_detection(labels, ev):
    """Compare generator labels to an EventLog.

    Passes key on (time, kicker, receiver, outcome), shots on (time, shooter, outcome);
    a detection counts only when every field agrees. Tackles and catches are scored on
    the success flag of the record at the labelled (time, player).
    """
    want = set()
    for lab in labels:
        if lab["kind"] == "pass":
            want.add(("pass", lab["time"], lab["kicker"], lab["receiver"], lab["outcome"]))
        elif lab["kind"] == "shot":
            want.add(("shot", lab["time"], lab["shooter"], lab["outcome"]))
    got = {("pass", p.start_time, p.kicker.label, p.receiver.label if p.receiver else None, p.outcome)
           for p in ev.passes}
    got |= {("shot", s.time, s.shooter.label, s.outcome) for s in ev.shots}
    tp = len(want & got)
    records = {(r.time, r.player.label): r.success for r in (*ev.tackles, *ev.catches)}
    binary = [lab for lab in labels if lab["kind"] in ("tackle", "catch")]
    correct = sum(records.get((lab["time"], lab["player"])) == lab["success"] for lab in binary)
    return {"labels": len(want), "detected": len(got), "tp": tp,
            "precision": tp / len(got) if got else 1.0, "recall": tp / len(want) if want else 1.0,
            "binary": len(binary), "binary_correct": correct}
