"""Behaviour-switching grasp controller over a simulated three-finger plant.

Each controller state installs a set of weights and setpoints over three
sensor channels (tip force, actuator pressure, piston position). The drive
is steepest descent on the weighted squared error, scaled by the actuator
gain and passed through a dead-band that stands in for hydraulic friction.

Plant: each finger is a point mass on a piston of length ``travel`` with
viscous damping; the object is a unilateral spring of stiffness ``stiffness``
whose surface sits at normalised piston position ``contact``. Integration is
explicit Euler.

In Hold the force loop is purely proportional, so the steady tip force is
offset from the setpoint: with ``g = 2 * gain * w_force`` and dead-band
``h`` it settles at ``(g * Fs - h) / (1 + g)`` when approached from below
(``+h`` from above). See ``hold_equilibrium``.
"""

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from neurohand.errors import InvalidArgument, SimulationDiverged

STATES = ("Rest", "Preshape", "Close", "Hold", "Comply", "Release")
COMMANDS = ("grasp", "release")
CHANNELS = ("force", "pressure", "position")

TRANSITIONS = {
    "Rest": {"Preshape", "Release"},
    "Preshape": {"Close", "Release"},
    "Close": {"Hold", "Release"},
    "Hold": {"Comply", "Release"},
    "Comply": {"Hold", "Release"},
    "Release": {"Rest"},
}


@dataclass(frozen=True)
class BehaviorWeights:
    weights: tuple = (0.0, 0.0, 0.0)  # force, pressure, position
    setpoints: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.weights) != 3 or len(self.setpoints) != 3:
            raise InvalidArgument("behaviour weights and setpoints need one value per channel")
        if any(w < 0 for w in self.weights):
            raise InvalidArgument("channel weights must be >= 0")


@dataclass(frozen=True)
class GraspConfig:
    fingers: int = 3
    mass: float = 0.05  # kg
    damping: float = 50.0  # N s / m
    travel: float = 0.1  # m of piston stroke
    gain: float = 25.0
    deadband: float = 0.05  # N
    stiffness: float = 100.0  # N / m
    contact: float = 0.5  # normalised piston position of the object surface
    preshape: float = 0.3
    preshape_tolerance: float = 0.02
    contact_threshold: float = 0.25  # N, any finger above it ends Close
    force_setpoint: float = 1.0  # N held in Hold and Comply
    hold_weight: float = 1.0
    comply_weight: float = 0.1
    comply_threshold: float = 0.5  # N of force above the setpoint
    position_weight: float = 1.0
    open_tolerance: float = 0.02
    dt: float = 1e-3
    duration: float = 3.0
    grasp_at: float = 0.1  # s, time of the grasp command
    release_at: float = -1.0  # s, negative: never
    disturbance: float = 0.0  # N of preload pushing the object into the fingers
    disturbance_start: float = 0.0
    disturbance_end: float = 0.0

    def __post_init__(self):
        if self.fingers < 1:
            raise InvalidArgument("need at least one finger")
        if self.dt <= 0:
            raise InvalidArgument(f"time step must be positive, got {self.dt}")
        if self.duration < 0:
            raise InvalidArgument("duration must be >= 0")
        if min(self.mass, self.travel) <= 0:
            raise InvalidArgument("mass and travel must be positive")
        if min(self.damping, self.stiffness, self.gain, self.deadband) < 0:
            raise InvalidArgument("damping, stiffness, gain and dead-band must be >= 0")
        if not 0 <= self.contact <= 1 or not 0 <= self.preshape <= 1:
            raise InvalidArgument("contact and preshape positions are normalised to [0, 1]")

    def behavior(self, state):
        fs = self.force_setpoint
        table = {
            "Rest": BehaviorWeights((0.0, 0.0, self.position_weight), (0.0, 0.0, 0.0)),
            "Preshape": BehaviorWeights((0.0, 0.0, self.position_weight), (0.0, 0.0, self.preshape)),
            "Close": BehaviorWeights((0.0, 0.0, self.position_weight), (0.0, 0.0, 1.0)),
            "Hold": BehaviorWeights((self.hold_weight, 0.0, 0.0), (fs, 0.0, 0.0)),
            "Comply": BehaviorWeights((self.comply_weight, 0.0, 0.0), (fs, 0.0, 0.0)),
            "Release": BehaviorWeights((0.0, 0.0, self.position_weight), (0.0, 0.0, 0.0)),
        }
        return table[state]

    def events(self):
        out = [(self.grasp_at, "grasp")] if self.grasp_at >= 0 else []
        if self.release_at >= 0:
            out.append((self.release_at, "release"))
        return sorted(out)


@dataclass
class SensorFrame:
    force: np.ndarray
    pressure: np.ndarray
    position: np.ndarray

    def channels(self):
        return np.stack([self.force, self.pressure, self.position])


def control_error(weights, sensors):
    """``E = sum_c w_c (r_c - s_c)^2`` over fingers, and the per-finger descent drive.

    All three readings grow as a finger closes, so the drive
    ``-sum_c 2 w_c (r_c - s_c)`` is the steepest-descent direction of E.
    """
    w = np.asarray(weights.weights, dtype=float)[:, None]
    dev = sensors.channels() - np.asarray(weights.setpoints, dtype=float)[:, None]
    e = float((w * dev * dev).sum())
    return e, -(2.0 * w * dev).sum(axis=0)


def dead_band(u, width):
    return np.sign(u) * np.maximum(np.abs(u) - width, 0.0)


def hold_equilibrium(gain, weight, setpoint, deadband, from_below=True):
    g = 2.0 * gain * weight
    return (g * setpoint - (deadband if from_below else -deadband)) / (1.0 + g)


@dataclass
class GraspState:
    name: str = "Rest"
    weights: BehaviorWeights = field(default_factory=BehaviorWeights)
    entered: float = 0.0

    def __post_init__(self):
        if self.name not in STATES:
            raise InvalidArgument(f"unknown grasp state {self.name!r}")


def fsm_step(state, sensors, events, cfg, t=0.0, log=None):
    """One controller update; transitions outside the graph are logged no-ops."""
    target = None
    for ev in events:
        if ev == "grasp":
            target = "Preshape" if state.name == "Rest" else None
        elif ev == "release":
            target = "Release" if state.name != "Release" else None
        else:
            raise InvalidArgument(f"unknown command {ev!r}")
        if target is None and log is not None:
            log.append((t, state.name, ev, "ignored"))
    if target is None:
        name = state.name
        if name == "Preshape" and np.all(np.abs(sensors.position - cfg.preshape) < cfg.preshape_tolerance):
            target = "Close"
        elif name == "Close" and np.any(sensors.force > cfg.contact_threshold):
            target = "Hold"
        elif name == "Hold" and np.any(sensors.force - cfg.force_setpoint > cfg.comply_threshold):
            target = "Comply"
        elif name == "Comply" and np.all(sensors.force - cfg.force_setpoint <= 0.5 * cfg.comply_threshold):
            target = "Hold"
        elif name == "Release" and np.all(sensors.position < cfg.open_tolerance):
            target = "Rest"
    if target is None:
        return state
    if target not in TRANSITIONS[state.name]:
        if log is not None:
            log.append((t, state.name, target, "undefined transition"))
        return state
    return GraspState(target, cfg.behavior(target), t)


def validate_trace(states):
    """Check that consecutive entries follow graph edges (self-loops allowed)."""
    for a, b in zip(states, states[1:]):
        if a != b and b not in TRANSITIONS.get(a, ()):
            raise InvalidArgument(f"illegal transition {a} -> {b}")
    return True


@dataclass
class FingerPlant:
    x: np.ndarray  # m along the piston
    v: np.ndarray

    @classmethod
    def open(cls, n):
        return cls(np.zeros(n), np.zeros(n))


@dataclass
class GraspTrace:
    times: np.ndarray
    states: list
    position: np.ndarray  # (steps, fingers), normalised
    force: np.ndarray
    pressure: np.ndarray
    error: np.ndarray
    log: list

    def visited(self):
        out = []
        for s in self.states:
            if not out or out[-1] != s:
                out.append(s)
        return out

    def to_csv(self):
        n = self.position.shape[1]
        head = ["step", "time", "state"]
        for i in range(n):
            head += [f"pos{i}", f"force{i}", f"pressure{i}"]
        lines = [",".join(head + ["E"])]
        for k, t in enumerate(self.times):
            row = [str(k), f"{t:.6f}", self.states[k]]
            for i in range(n):
                row += [f"{self.position[k, i]:.9g}", f"{self.force[k, i]:.9g}", f"{self.pressure[k, i]:.9g}"]
            lines.append(",".join(row + [f"{self.error[k]:.9g}"]))
        return "\n".join(lines) + "\n"


def _sense(plant, cfg, drive, t):
    # a disturbance pushes the object towards the fingers: the spring gains a preload
    push = cfg.disturbance if cfg.disturbance_start <= t < cfg.disturbance_end else 0.0
    force = np.maximum(cfg.stiffness * (plant.x - cfg.contact * cfg.travel) + push, 0.0)
    return SensorFrame(force, drive, plant.x / cfg.travel)


def simulate(cfg=GraspConfig(), plant=None, state=None):
    """Run the closed loop for ``cfg.duration`` seconds; deterministic."""
    plant = plant or FingerPlant.open(cfg.fingers)
    state = state or GraspState("Rest", cfg.behavior("Rest"), 0.0)
    steps = int(round(cfg.duration / cfg.dt))
    events = cfg.events()
    n = cfg.fingers
    out_pos = np.empty((steps, n))
    out_force = np.empty((steps, n))
    out_pressure = np.empty((steps, n))
    out_err = np.empty(steps)
    states, times, log = [], np.arange(steps) * cfg.dt, []
    drive = np.zeros(n)
    ev_i = 0
    for k in range(steps):
        t = times[k]
        due = []
        while ev_i < len(events) and events[ev_i][0] <= t + 1e-12:
            due.append(events[ev_i][1])
            ev_i += 1
        sensors = _sense(plant, cfg, drive, t)
        state = fsm_step(state, sensors, due, cfg, t, log)
        e, direction = control_error(state.weights, sensors)
        drive = dead_band(cfg.gain * direction, cfg.deadband)
        sensors = SensorFrame(sensors.force, drive, sensors.position)
        acc = (drive - sensors.force - cfg.damping * plant.v) / cfg.mass
        x = plant.x + cfg.dt * plant.v
        v = plant.v + cfg.dt * acc
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))) or np.abs(v).max() > 1e6:
            raise SimulationDiverged(k)
        stop = ((x <= 0.0) & (v < 0)) | ((x >= cfg.travel) & (v > 0))
        plant = FingerPlant(np.clip(x, 0.0, cfg.travel), np.where(stop, 0.0, v))
        out_pos[k] = sensors.position
        out_force[k] = sensors.force
        out_pressure[k] = drive
        out_err[k] = e
        states.append(state.name)
    return GraspTrace(times, states, out_pos, out_force, out_pressure, out_err, log)


def config_fields():
    return [f.name for f in fields(GraspConfig)]


def with_overrides(cfg, **kw):
    return replace(cfg, **kw)


def settle_time(trace, state="Hold"):
    for t, s in zip(trace.times, trace.states):
        if s == state:
            return float(t)
    return math.inf
