"""Demo applications on top of the decoder: grid snake with dynamic
stopping, and free painting where the cursor trajectory is the brushstroke.

Snake state is immutable and every transition is a pure function of
(state, scores, alpha), so a full game replays bit-for-bit from a score
log. Grid cells are (col, row) with row 0 at the bottom, matching the +y
up screen convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import SessionConfig, Vec2
from .velocity import confidence_gate

INITIAL_LENGTH = 3
DEFAULT_GRID = 16


@dataclass(frozen=True)
class SnakeState:
    cols: int
    rows: int
    snake: tuple[tuple[int, int], ...]  # head first
    food: tuple[int, int] | None
    score: int
    alive: bool
    food_seed: int
    foods_eaten: int

    def to_dict(self) -> dict:
        return {
            "cols": self.cols,
            "rows": self.rows,
            "snake": [[c, r] for c, r in self.snake],
            "food": None if self.food is None else [self.food[0], self.food[1]],
            "score": self.score,
            "alive": self.alive,
            "food_seed": self.food_seed,
            "foods_eaten": self.foods_eaten,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SnakeState":
        food = data["food"]
        return cls(
            cols=int(data["cols"]),
            rows=int(data["rows"]),
            snake=tuple((int(c), int(r)) for c, r in data["snake"]),
            food=None if food is None else (int(food[0]), int(food[1])),
            score=int(data["score"]),
            alive=bool(data["alive"]),
            food_seed=int(data["food_seed"]),
            foods_eaten=int(data["foods_eaten"]),
        )


def _spawn_food(snake: Sequence[tuple[int, int]], cols: int, rows: int,
                seed: int, foods_eaten: int) -> tuple[int, int] | None:
    """Uniform draw over free cells, keyed by (seed, foods so far)."""
    occupied = set(snake)
    free = [(c, r) for r in range(rows) for c in range(cols)
            if (c, r) not in occupied]
    if not free:
        return None
    rng = np.random.default_rng([seed, foods_eaten])
    return free[int(rng.integers(len(free)))]


def new_game(cols: int = DEFAULT_GRID, rows: int = DEFAULT_GRID,
             seed: int = 0) -> SnakeState:
    """Fresh game: length-3 snake heading right from the grid center."""
    if cols < INITIAL_LENGTH + 1 or rows < 2:
        raise ValueError("grid too small")
    cx, cy = cols // 2, rows // 2
    body = tuple((cx - i, cy) for i in range(INITIAL_LENGTH))
    return SnakeState(
        cols=cols, rows=rows, snake=body,
        food=_spawn_food(body, cols, rows, seed, 0),
        score=0, alive=True, food_seed=seed, foods_eaten=0,
    )


def axis_moves(n_regions: int) -> dict[int, tuple[int, int]]:
    """Region index -> grid delta, for regions whose center angle lies on
    a screen axis. Other regions have no movement function."""
    deltas = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    moves = {}
    for r in range(n_regions):
        if (4 * r) % n_regions == 0:
            moves[r] = deltas[(4 * r) // n_regions % 4]
    return moves


def snake_step(state: SnakeState, rho: np.ndarray,
               alpha: float = 0.05) -> SnakeState:
    """Advance at most one cell. The confidence gate decides move vs hold,
    and only the four axis-aligned regions steer; a confident diagonal
    argmax still holds. Running into a wall or the body ends the game."""
    if not state.alive:
        raise ValueError("game over; start a new game")
    gate = confidence_gate(rho, alpha)
    if not gate.move:
        return state
    delta = axis_moves(len(np.asarray(rho))).get(gate.region)
    if delta is None:
        return state
    head = state.snake[0]
    new_head = (head[0] + delta[0], head[1] + delta[1])
    if not (0 <= new_head[0] < state.cols and 0 <= new_head[1] < state.rows):
        return replace(state, alive=False)
    eating = new_head == state.food
    # the tail cell is vacated in the same tick unless the snake grows
    blocking = state.snake if eating else state.snake[:-1]
    if new_head in blocking:
        return replace(state, alive=False)
    if eating:
        body = (new_head,) + state.snake
        eaten = state.foods_eaten + 1
        return replace(
            state, snake=body, score=state.score + 1, foods_eaten=eaten,
            food=_spawn_food(body, state.cols, state.rows, state.food_seed, eaten),
        )
    return replace(state, snake=(new_head,) + state.snake[:-1])


def replay_snake(initial: SnakeState, rho_log: Sequence[np.ndarray],
                 alpha: float = 0.05) -> list[SnakeState]:
    """Re-run a game from its score log; returns the state after every
    step, stopping at death."""
    states = []
    state = initial
    for rho in rho_log:
        state = snake_step(state, rho, alpha)
        states.append(state)
        if not state.alive:
            break
    return states


@dataclass
class PaintingState:
    """Strokes painted so far. Mutated in place by the step functions
    (strokes grow by one point per frame); the functions return the state
    to allow chaining."""

    width_px: float
    height_px: float
    strokes: list[list[Vec2]] = field(default_factory=list)
    brush_down: bool = False

    def to_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "brush_down": self.brush_down,
            "strokes": [[[p[0], p[1]] for p in stroke] for stroke in self.strokes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PaintingState":
        return cls(
            width_px=float(data["width_px"]),
            height_px=float(data["height_px"]),
            strokes=[[(float(x), float(y)) for x, y in stroke]
                     for stroke in data["strokes"]],
            brush_down=bool(data["brush_down"]),
        )


def new_painting(config: SessionConfig) -> PaintingState:
    return PaintingState(width_px=float(config.screen_width_px),
                         height_px=float(config.screen_height_px))


def set_brush(state: PaintingState, down: bool) -> PaintingState:
    """Lowering the brush opens a new stroke; raising it just stops
    recording."""
    if down and not state.brush_down:
        state.strokes.append([])
    state.brush_down = down
    return state


def paint_step(state: PaintingState, cursor_px: Vec2) -> PaintingState:
    """Record one frame position into the open stroke (canvas-clamped)."""
    if not state.brush_down:
        return state
    x = min(max(float(cursor_px[0]), -state.width_px / 2.0), state.width_px / 2.0)
    y = min(max(float(cursor_px[1]), -state.height_px / 2.0), state.height_px / 2.0)
    state.strokes[-1].append((x, y))
    return state


def painting_to_svg(state: PaintingState) -> str:
    """SVG document of the strokes; y axis flipped into screen-down
    coordinates with the origin at the top-left corner."""
    w, h = state.width_px, state.height_px
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:g} {h:g}" '
        f'width="{w:g}" height="{h:g}">',
        f'<rect width="{w:g}" height="{h:g}" fill="white"/>',
    ]
    for stroke in state.strokes:
        if len(stroke) >= 2:
            pts = " ".join(f"{x + w / 2.0:.2f},{h / 2.0 - y:.2f}" for x, y in stroke)
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="black" '
                f'stroke-width="2" stroke-linecap="round" stroke-linejoin="round"/>'
            )
        elif len(stroke) == 1:
            x, y = stroke[0]
            parts.append(
                f'<circle cx="{x + w / 2.0:.2f}" cy="{h / 2.0 - y:.2f}" '
                f'r="1" fill="black"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def snake_to_json(state: SnakeState) -> str:
    return json.dumps(state.to_dict(), sort_keys=True, separators=(",", ":"))


def painting_to_json(state: PaintingState) -> str:
    return json.dumps(state.to_dict(), sort_keys=True, separators=(",", ":"))
