"""Planar track-driving environment exposing several noisy views of one state.

A point mass with heading and speed follows a closed polyline track. The
per-step reward encourages speed along the track tangent and penalizes
lateral speed and offset from the centerline; leaving the road (or hitting
the step cap) ends the episode.

Each view is an affine projection of a normalized 13-feature summary of the
latent state, with a per-view Gaussian noise variance. Views are made
genuinely partial by suppressing a distinct feature subset per view, scaled
by a diversity knob (0 = all views identical, 1 = fully distinct). A view
flagged irrelevant emits unit-variance Gaussian noise carrying no state
information at all.

The environment config round-trips through JSON (see ``to_config``), and a
trajectory trace can be dumped to CSV for debugging.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

N_FEATURES = 13

# Feature layout: x, y, sin/cos heading, speed, lateral offset, sin/cos
# heading error, left/right edge distance, three lookahead bend angles.
_VIEW_MASKS = [
    (0, 1),              # lacks absolute position
    (4,),                # lacks speed
    (10, 11, 12),        # lacks lookahead bends
    (5, 6, 7, 8, 9),     # lacks track-relative pose
]


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


@dataclass
class LatentState:
    position: np.ndarray
    heading: float
    speed: float
    steps: int


@dataclass
class ViewSpec:
    matrix: np.ndarray
    bias: np.ndarray
    sigma2: float
    irrelevant: bool = False


@dataclass
class StepResult:
    observations: list
    reward: float
    terminal: bool
    info: dict = field(default_factory=dict)


class Track:
    """Closed polyline centerline with a constant half width."""

    def __init__(self, points, half_width):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError("track needs at least 3 centerline points")
        if half_width <= 0:
            raise ValueError("half width must be positive")
        self.points = pts
        self.half_width = float(half_width)
        nxt = np.roll(pts, -1, axis=0)
        self._seg_vec = nxt - pts
        self._seg_len = np.linalg.norm(self._seg_vec, axis=1)
        if np.any(self._seg_len <= 0):
            raise ValueError("track has zero-length segments")
        self._seg_dir = self._seg_vec / self._seg_len[:, None]
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self._cum[-1])
        self.extent = float(np.abs(pts).max())

    @classmethod
    def loop(cls, n_points=240, base_radius=6.0, amp=1.2, lobes=2, phase=0.0,
             half_width=1.0):
        """Closed wobbled loop; the default has two chicane-like bends."""
        theta = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
        r = base_radius + amp * np.sin(lobes * theta + phase)
        pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        return cls(pts, half_width)

    def nearest(self, p):
        """Project onto the centerline.

        Returns (arclength, signed lateral offset, tangent angle); the offset
        is positive to the left of the direction of travel.
        """
        rel = p[None, :] - self.points
        t = np.einsum("ij,ij->i", rel, self._seg_vec) / (self._seg_len**2)
        t = np.clip(t, 0.0, 1.0)
        proj = self.points + t[:, None] * self._seg_vec
        d2 = np.sum((p[None, :] - proj) ** 2, axis=1)
        i = int(np.argmin(d2))
        s = self._cum[i] + t[i] * self._seg_len[i]
        dirv = self._seg_dir[i]
        offset = p - self.points[i]
        lateral = dirv[0] * offset[1] - dirv[1] * offset[0]
        return s, float(lateral), float(np.arctan2(dirv[1], dirv[0]))

    def tangent_angle(self, s):
        s = s % self.length
        i = int(np.searchsorted(self._cum[1:], s, side="right"))
        i = min(i, len(self._seg_dir) - 1)
        d = self._seg_dir[i]
        return float(np.arctan2(d[1], d[0]))


def apply_view_noise(view, sigma2, rng):
    """Add i.i.d. zero-mean Gaussian noise per coordinate."""
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    view = np.asarray(view, dtype=np.float64)
    if sigma2 == 0:
        return view.copy()
    return view + rng.normal(0.0, np.sqrt(sigma2), view.shape)


class TrackEnv:
    """Track navigation with N_w configurable affine views of the latent state."""

    def __init__(self, track=None, n_views=4, view_dim=12, diversity=1.0,
                 sigma2=0.01, views_seed=0, dt=0.05, v_max=2.0, steer_rate=2.0,
                 accel_rate=2.0, max_steps=500, lookahead=(0.5, 1.5, 3.0)):
        self.track = track if track is not None else Track.loop()
        problems = []
        if n_views < 1:
            problems.append("need at least one view")
        if view_dim < 1:
            problems.append("view dimension must be positive")
        if not 0.0 <= diversity <= 1.0:
            problems.append("diversity must lie in [0, 1]")
        if dt <= 0 or v_max <= 0 or max_steps < 1:
            problems.append("dt, v_max and max_steps must be positive")
        if len(lookahead) != 3:
            problems.append("exactly three lookahead distances are expected")
        sigmas = [sigma2] * n_views if np.isscalar(sigma2) else list(sigma2)
        if len(sigmas) != n_views:
            problems.append(f"{len(sigmas)} noise variances for {n_views} views")
        if any(s < 0 for s in sigmas):
            problems.append("noise variances must be nonnegative")
        if problems:
            raise ValueError("; ".join(problems))

        self.n_views = int(n_views)
        self.view_dim = int(view_dim)
        self.diversity = float(diversity)
        self.views_seed = int(views_seed)
        self.dt = float(dt)
        self.v_max = float(v_max)
        self.steer_rate = float(steer_rate)
        self.accel_rate = float(accel_rate)
        self.max_steps = int(max_steps)
        self.lookahead = tuple(float(v) for v in lookahead)
        self.action_dim = 2

        self.view_specs = self._build_views(sigmas)
        self._sigma2_config = sigmas

        self._rng = np.random.default_rng(0)
        self.latent = None
        self._terminal = True
        self._distance = 0.0
        self._trace = None

    # -- construction ---------------------------------------------------------

    def _build_views(self, sigmas):
        rng = np.random.default_rng(self.views_seed)
        scale = 1.0 / np.sqrt(N_FEATURES)
        base = rng.normal(0.0, scale, (self.view_dim, N_FEATURES))
        specs = []
        for w in range(self.n_views):
            raw = rng.normal(0.0, scale, (self.view_dim, N_FEATURES))
            matrix = (1.0 - self.diversity) * base + self.diversity * raw
            col_scale = np.ones(N_FEATURES)
            for j in _VIEW_MASKS[w % len(_VIEW_MASKS)]:
                col_scale[j] = 1.0 - self.diversity
            specs.append(
                ViewSpec(matrix=matrix * col_scale, bias=np.zeros(self.view_dim),
                         sigma2=float(sigmas[w]))
            )
        return specs

    @property
    def view_dims(self):
        return [self.view_dim] * self.n_views

    # -- protocol switches ------------------------------------------------------

    def perturb_view(self, index, sigma2):
        """Raise one view's noise variance (the degraded-sensor protocol)."""
        if not 0 <= index < self.n_views:
            raise ValueError(f"view index {index} out of range")
        if sigma2 < 0:
            raise ValueError("noise variance must be nonnegative")
        self.view_specs[index].sigma2 = float(sigma2)

    def make_irrelevant(self, indices):
        """Replace views with pure noise carrying no state information."""
        for i in indices:
            if not 0 <= i < self.n_views:
                raise ValueError(f"view index {i} out of range")
        for i in indices:
            self.view_specs[i].irrelevant = True

    # -- dynamics ---------------------------------------------------------------

    def reset(self, seed=None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        start = self.track.points[0]
        heading = self.track.tangent_angle(0.0)
        self.latent = LatentState(position=start.astype(np.float64).copy(),
                                  heading=heading, speed=0.0, steps=0)
        self._terminal = False
        self._distance = 0.0
        if self._trace is not None:
            self._trace = []
        return StepResult(observations=self._observe(), reward=0.0, terminal=False,
                          info={"distance": 0.0, "time": 0.0})

    def step(self, action):
        if self.latent is None or self._terminal:
            raise ValueError("episode is terminal; call reset first")
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        if a.shape != (2,):
            raise ValueError("action must be (steer, accel)")
        st = self.latent
        st.heading = _wrap_angle(st.heading + self.steer_rate * a[0] * self.dt)
        st.speed = float(np.clip(st.speed + self.accel_rate * a[1] * self.dt,
                                 0.0, self.v_max))
        st.position = st.position + st.speed * self.dt * np.array(
            [np.cos(st.heading), np.sin(st.heading)]
        )
        st.steps += 1
        self._distance += st.speed * self.dt

        _, lateral, tangent = self.track.nearest(st.position)
        err = _wrap_angle(st.heading - tangent)
        hw = self.track.half_width
        reward = (st.speed * np.cos(err)
                  - st.speed * abs(np.sin(err))
                  - st.speed * abs(lateral) / hw)
        self._terminal = abs(lateral) > hw or st.steps >= self.max_steps
        info = {"distance": self._distance, "time": st.steps * self.dt,
                "speed": st.speed, "lateral": lateral, "heading_error": err}
        if self._trace is not None:
            self._trace.append([st.steps, st.position[0], st.position[1],
                                st.heading, st.speed, lateral, float(reward),
                                a[0], a[1], int(self._terminal)])
        return StepResult(observations=self._observe(), reward=float(reward),
                          terminal=self._terminal, info=info)

    # -- observation ------------------------------------------------------------

    def features(self):
        """Normalized 13-feature summary of the latent state."""
        st = self.latent
        s, lateral, _ = self.track.nearest(st.position)
        tangent = self.track.tangent_angle(s)
        err = _wrap_angle(st.heading - tangent)
        hw = self.track.half_width
        ext = max(self.track.extent, 1e-9)
        bends = [
            _wrap_angle(self.track.tangent_angle(s + d) - tangent) / np.pi
            for d in self.lookahead
        ]
        return np.array([
            st.position[0] / ext,
            st.position[1] / ext,
            np.sin(st.heading),
            np.cos(st.heading),
            st.speed / self.v_max,
            lateral / hw,
            np.sin(err),
            np.cos(err),
            (hw - lateral) / (2.0 * hw),
            (hw + lateral) / (2.0 * hw),
            *bends,
        ])

    def observe(self):
        """Fresh (noisy) observations of the current latent state."""
        return self._observe()

    def _observe(self):
        phi = self.features()
        obs = []
        for spec in self.view_specs:
            if spec.irrelevant:
                obs.append(self._rng.standard_normal(self.view_dim))
            else:
                o = spec.matrix @ phi + spec.bias
                if spec.sigma2 > 0:
                    o = o + self._rng.normal(0.0, np.sqrt(spec.sigma2), self.view_dim)
                obs.append(o)
        return obs

    # -- config and tracing -------------------------------------------------------

    def to_config(self):
        cfg = {
            "track": {"kind": "polyline",
                      "points": self.track.points.tolist(),
                      "half_width": self.track.half_width},
            "n_views": self.n_views,
            "view_dim": self.view_dim,
            "diversity": self.diversity,
            "sigma2": list(self._sigma2_config),
            "views_seed": self.views_seed,
            "dt": self.dt,
            "v_max": self.v_max,
            "steer_rate": self.steer_rate,
            "accel_rate": self.accel_rate,
            "max_steps": self.max_steps,
            "lookahead": list(self.lookahead),
        }
        return cfg

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg)
        track_cfg = dict(cfg.pop("track", {"kind": "loop"}))
        kind = track_cfg.pop("kind", "loop")
        if kind == "loop":
            track = Track.loop(**track_cfg)
        elif kind == "polyline":
            track = Track(track_cfg["points"], track_cfg["half_width"])
        else:
            raise ValueError(f"unknown track kind {kind!r}")
        return cls(track=track, **cfg)

    def save_config(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_config(), fh, indent=2)

    @classmethod
    def load_config(cls, path):
        with open(path) as fh:
            return cls.from_config(json.load(fh))

    def start_trace(self):
        self._trace = []

    def save_trace(self, path):
        if self._trace is None:
            raise ValueError("tracing was never started")
        header = "step,x,y,heading,speed,lateral,reward,steer,accel,terminal"
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in self._trace:
                fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                                  for v in row) + "\n")
