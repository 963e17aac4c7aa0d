"""Synthetic fermentation runs with desk-scale tank physics.

A run is driven by a handful of mechanisms that together reproduce the
signatures seen on instrumented fermentation tanks:

* extract (sugar) is flat during a lag phase, then decays first-order
  toward an attenuation floor;
* CO2 production pressurizes the sealed headspace until the airlock vents
  at its cap, while the gas also tracks wort-temperature changes (so runs
  that start warmer than ambient show the early pressure dip);
* the bottom sensor reads headspace plus the hydrostatic column of the
  wort, so density and fill-height changes show up directly;
* each spindle probe permanently removes 100 ml of wort, dropping the
  column height and with it the hydrostatic pressure;
* wort temperature relaxes toward a diurnal ambient sinusoid.

Everything is deterministic for a fixed config (including its RNG seed).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ValidationError
from .validation import check_finite, check_nonnegative, check_positive

G_M_S2 = 9.80665        # standard gravity
PA_PER_MBAR = 100.0
STEPS_PER_DAY = 1440    # one step is one 60 s sampling cycle

SPINDLE = "spindle"
REFRACTOMETER = "refractometer"
PROBE_KINDS = (SPINDLE, REFRACTOMETER)

SPINDLE_SAMPLE_L = 0.1          # a spindle reading costs 100 ml of wort
WORT_BRIX_FACTOR = 1.04         # °Brix shown by a refractometer per °Plato of wort

WORT_TEMP_TAU_STEPS = 600.0     # first-order thermal tracking of the tank content
HEADSPACE_MBAR_PER_C = 3.4      # ideal-gas response of the sealed headspace
HEADSPACE_MBAR_PER_PLATO = 50.0  # headspace pressurization per °P of fermented extract

MAX_PLATO = 30.0


def ambient_temperature(step, mean_c: float, amp_c: float):
    """Diurnal ambient temperature: ``mean + amp * sin(2*pi*step/1440)``."""
    step = np.asarray(step, dtype=np.float64)
    out = mean_c + amp_c * np.sin(2.0 * np.pi * step / STEPS_PER_DAY)
    return float(out) if out.ndim == 0 else out


def hydrostatic_pressure(density_kg_m3, height_m):
    """Pressure of a liquid column in mbar: ``rho * g * h / 100`` (Pa -> mbar)."""
    density = np.asarray(density_kg_m3, dtype=np.float64)
    height = np.asarray(height_m, dtype=np.float64)
    if np.any(density < 0):
        raise ValidationError(f"density must be >= 0, got {density_kg_m3!r}")
    if np.any(height < 0):
        raise ValidationError(f"height must be >= 0, got {height_m!r}")
    out = density * G_M_S2 * height / PA_PER_MBAR
    return float(out) if out.ndim == 0 else out


def plato_to_density(plato):
    """Wort density in kg/m3 via the specific-gravity relation SG = 259/(259 - P)."""
    p = np.asarray(plato, dtype=np.float64)
    if np.any(p < 0) or np.any(p > MAX_PLATO):
        raise ValidationError(f"plato must be within [0, {MAX_PLATO}], got {plato!r}")
    out = 1000.0 * 259.0 / (259.0 - p)
    return float(out) if out.ndim == 0 else out


def density_to_plato(density_kg_m3):
    """Inverse of :func:`plato_to_density`; accepts any positive density."""
    rho = np.asarray(density_kg_m3, dtype=np.float64)
    if np.any(rho <= 0):
        raise ValidationError(f"density must be > 0, got {density_kg_m3!r}")
    out = 259.0 * (rho - 1000.0) / rho
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NoiseLevels:
    """Per-channel Gaussian noise standard deviations."""

    pressure_mbar: float = 0.15
    wort_temp_c: float = 0.05
    ambient_temp_c: float = 0.05
    spindle_plato: float = 0.05
    refractometer_brix: float = 0.10

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            check_nonnegative(f"noise_sd.{name}", getattr(self, name))

    @classmethod
    def zero(cls) -> "NoiseLevels":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


def default_probe_schedule(duration_steps: int) -> tuple[tuple[int, str], ...]:
    """Daily refractometer readings plus spindle probes at start, middle and end."""
    if duration_steps <= 0:
        return ()
    refr = list(range(0, duration_steps, STEPS_PER_DAY))
    if refr[-1] != duration_steps - 1:
        refr.append(duration_steps - 1)
    spindle = sorted({0, int(0.55 * duration_steps), max(0, duration_steps - 80)})
    schedule = [(s, REFRACTOMETER) for s in refr]
    schedule += [(s, SPINDLE) for s in spindle if s < duration_steps]
    return tuple(sorted(schedule, key=lambda entry: (entry[0], entry[1])))


@dataclass(frozen=True)
class ProcessConfig:
    """Full parameterization of one simulated fermentation."""

    initial_plato: float = 12.0
    final_plato: float = 3.0
    volume_l: float = 60.0
    fill_height_m: float = 0.55
    duration_steps: int = 10080
    lag_steps: int = 600
    rate_k: float = 4.5e-4
    ambient_mean_c: float = 21.0
    ambient_amp_c: float = 1.0
    wort_initial_c: float = 25.0
    airlock_cap_mbar: float = 50.0
    probe_schedule: tuple[tuple[int, str], ...] | None = None
    noise_sd: NoiseLevels = field(default_factory=NoiseLevels)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.initial_plato > self.final_plato >= 0:
            raise ValidationError(
                "require initial_plato > final_plato >= 0, got "
                f"{self.initial_plato!r} / {self.final_plato!r}"
            )
        if self.initial_plato > MAX_PLATO:
            raise ValidationError(f"initial_plato must be <= {MAX_PLATO}")
        if self.duration_steps < 0:
            raise ValidationError(f"duration_steps must be >= 0, got {self.duration_steps}")
        check_nonnegative("lag_steps", self.lag_steps)
        check_nonnegative("rate_k", self.rate_k)
        check_nonnegative("ambient_amp_c", self.ambient_amp_c)
        check_positive("volume_l", self.volume_l)
        check_positive("fill_height_m", self.fill_height_m)
        check_positive("airlock_cap_mbar", self.airlock_cap_mbar)
        if self.probe_schedule is None:
            object.__setattr__(self, "probe_schedule", default_probe_schedule(self.duration_steps))
        else:
            object.__setattr__(
                self, "probe_schedule", tuple((int(s), str(k)) for s, k in self.probe_schedule)
            )
        self._validate_schedule()
        if not isinstance(self.noise_sd, NoiseLevels):
            object.__setattr__(self, "noise_sd", NoiseLevels(**dict(self.noise_sd)))

    def _validate_schedule(self):
        last_by_kind: dict[str, int] = {}
        for step, kind in self.probe_schedule:
            if kind not in PROBE_KINDS:
                raise ValidationError(f"unknown probe kind {kind!r}")
            if not 0 <= step < self.duration_steps:
                raise ValidationError(
                    f"probe step {step} outside [0, {self.duration_steps})"
                )
            if kind in last_by_kind and step <= last_by_kind[kind]:
                raise ValidationError(
                    f"probe steps must be strictly increasing per kind ({kind} at {step})"
                )
            last_by_kind[kind] = step

    @property
    def cross_section_m2(self) -> float:
        """Cylindrical vessel cross-section derived from volume and fill height."""
        return (self.volume_l / 1000.0) / self.fill_height_m


@dataclass(frozen=True)
class SensorSample:
    """One time step of measured values."""

    step: int
    pressure_mbar: float
    wort_temp_c: float
    ambient_temp_c: float

    def __post_init__(self):
        check_nonnegative("step", self.step)
        check_nonnegative("pressure_mbar", self.pressure_mbar)


@dataclass(frozen=True)
class ProbeEvent:
    """A manual density probe: spindle (°Plato) or refractometer (°Brix)."""

    step: int
    kind: str
    value: float
    removed_volume_l: float = 0.0

    def __post_init__(self):
        check_nonnegative("step", self.step)
        if self.kind not in PROBE_KINDS:
            raise ValidationError(f"unknown probe kind {self.kind!r}")
        if not 0 <= self.value <= MAX_PLATO:
            raise ValidationError(f"probe value {self.value!r} outside [0, {MAX_PLATO}]")
        check_nonnegative("removed_volume_l", self.removed_volume_l)


@dataclass
class ProcessRun:
    """A complete simulated fermentation.

    Measured series (``pressure_mbar``, ``wort_temp_c``, ``ambient_temp_c``)
    carry sensor noise; ``headspace_mbar``, ``hydrostatic_mbar`` and
    ``fill_m`` are the noise-free components that produced them.
    """

    run_id: str
    config: ProcessConfig
    pressure_mbar: np.ndarray
    wort_temp_c: np.ndarray
    ambient_temp_c: np.ndarray
    true_plato: np.ndarray
    headspace_mbar: np.ndarray
    hydrostatic_mbar: np.ndarray
    fill_m: np.ndarray
    probes: tuple[ProbeEvent, ...]
    initial_pressure_mbar: float
    initial_plato: float

    def __post_init__(self):
        n = self.config.duration_steps
        for name in ("pressure_mbar", "wort_temp_c", "ambient_temp_c", "true_plato",
                     "headspace_mbar", "hydrostatic_mbar", "fill_m"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise ValidationError(f"{name} must have shape ({n},), got {arr.shape}")
            check_finite(name, arr)
            setattr(self, name, arr)
        if np.any(self.pressure_mbar < 0):
            raise ValidationError("pressure_mbar must be >= 0 everywhere")

    @property
    def duration_steps(self) -> int:
        return self.config.duration_steps

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.duration_steps, dtype=np.int64)

    @property
    def samples(self) -> list[SensorSample]:
        return [
            SensorSample(int(s), float(p), float(w), float(a))
            for s, p, w, a in zip(
                self.steps, self.pressure_mbar, self.wort_temp_c, self.ambient_temp_c
            )
        ]

    def spindle_steps(self) -> list[int]:
        return [p.step for p in self.probes if p.kind == SPINDLE]


def _true_plato_series(config: ProcessConfig) -> np.ndarray:
    steps = np.arange(config.duration_steps, dtype=np.float64)
    active = np.maximum(steps - config.lag_steps, 0.0)
    decay = np.exp(-config.rate_k * active)
    plato = config.final_plato + (config.initial_plato - config.final_plato) * decay
    plato[steps < config.lag_steps] = config.initial_plato
    return plato


def _wort_temperature_series(config: ProcessConfig, ambient: np.ndarray) -> np.ndarray:
    n = config.duration_steps
    wort = np.empty(n, dtype=np.float64)
    if n == 0:
        return wort
    wort[0] = config.wort_initial_c
    for s in range(1, n):
        wort[s] = wort[s - 1] + (ambient[s] - wort[s - 1]) / WORT_TEMP_TAU_STEPS
    return wort


def _headspace_series(config: ProcessConfig, plato: np.ndarray, wort: np.ndarray) -> np.ndarray:
    """Headspace gauge pressure: CO2 build-up plus thermal tracking, vented at the cap.

    The airlock only releases excess pressure, so thermal dips below the cap
    are recovered by renewed production, never by backflow.
    """
    n = config.duration_steps
    head = np.empty(n, dtype=np.float64)
    if n == 0:
        return head
    cap = config.airlock_cap_mbar
    head[0] = 0.0
    for s in range(1, n):
        produced = HEADSPACE_MBAR_PER_PLATO * max(0.0, plato[s - 1] - plato[s])
        thermal = HEADSPACE_MBAR_PER_C * (wort[s] - wort[s - 1])
        head[s] = min(cap, max(-cap, head[s - 1] + produced + thermal))
    return head


def _fill_series(config: ProcessConfig) -> np.ndarray:
    """Fill height over time; each spindle probe permanently lowers the column."""
    fill = np.full(config.duration_steps, config.fill_height_m, dtype=np.float64)
    drop = SPINDLE_SAMPLE_L / 1000.0 / config.cross_section_m2
    for step, kind in config.probe_schedule:
        if kind == SPINDLE and step + 1 < config.duration_steps:
            fill[step + 1:] -= drop
    if fill.size and fill[-1] <= 0:
        raise ValidationError("probe schedule drains the vessel below the bottom sensor")
    return fill


def simulate_process(config: ProcessConfig, run_id: str | None = None) -> ProcessRun:
    """Run the simulator; deterministic for a fixed config (seed included)."""
    if run_id is None:
        run_id = f"run-seed{config.rng_seed}"
    n = config.duration_steps
    rng = np.random.default_rng(config.rng_seed)

    plato = _true_plato_series(config)
    ambient = ambient_temperature(np.arange(n), config.ambient_mean_c, config.ambient_amp_c)
    ambient = np.asarray(ambient, dtype=np.float64).reshape(n)
    wort = _wort_temperature_series(config, ambient)
    head = _headspace_series(config, plato, wort)
    fill = _fill_series(config)
    hydro = hydrostatic_pressure(plato_to_density(plato), fill) if n else np.empty(0)
    hydro = np.asarray(hydro, dtype=np.float64).reshape(n)

    sd = config.noise_sd
    pressure = np.maximum(0.0, head + hydro + rng.normal(0.0, 1.0, n) * sd.pressure_mbar)
    wort_meas = wort + rng.normal(0.0, 1.0, n) * sd.wort_temp_c
    ambient_meas = ambient + rng.normal(0.0, 1.0, n) * sd.ambient_temp_c

    probes = []
    for step, kind in config.probe_schedule:
        true_value = plato[step]
        if kind == SPINDLE:
            value = true_value + rng.normal(0.0, 1.0) * sd.spindle_plato
            removed = SPINDLE_SAMPLE_L
        else:
            value = true_value * WORT_BRIX_FACTOR + rng.normal(0.0, 1.0) * sd.refractometer_brix
            removed = 0.0
        probes.append(ProbeEvent(step, kind, float(np.clip(value, 0.0, MAX_PLATO)), removed))

    return ProcessRun(
        run_id=run_id,
        config=config,
        pressure_mbar=pressure,
        wort_temp_c=wort_meas,
        ambient_temp_c=ambient_meas,
        true_plato=plato,
        headspace_mbar=head,
        hydrostatic_mbar=hydro,
        fill_m=fill,
        probes=tuple(probes),
        initial_pressure_mbar=float(pressure[0]) if n else math.nan,
        initial_plato=float(plato[0]) if n else config.initial_plato,
    )


def two_sensor_pressures(run: ProcessRun, gap_m: float = 0.10) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free bottom/upper sensor pair separated by ``gap_m`` of wort column."""
    check_positive("gap_m", gap_m)
    if run.duration_steps and np.min(run.fill_m) <= gap_m:
        raise ValidationError("upper sensor is not covered by wort for this gap")
    density = plato_to_density(run.true_plato) if run.duration_steps else np.empty(0)
    p_low = run.headspace_mbar + hydrostatic_pressure(density, run.fill_m)
    p_high = run.headspace_mbar + hydrostatic_pressure(density, run.fill_m - gap_m)
    return p_low, p_high


# ---------------------------------------------------------------------------
# File interchange: samples CSV, probes CSV, config JSON
# ---------------------------------------------------------------------------

SAMPLES_HEADER = ["step", "pressure_mbar", "wort_temp_c", "ambient_temp_c"]
PROBES_HEADER = ["step", "kind", "value", "removed_volume_l"]


def _fmt(x: float) -> str:
    return repr(float(x))


def samples_csv_path(data_dir: Path, run_id: str) -> Path:
    return Path(data_dir) / f"{run_id}.samples.csv"


def probes_csv_path(data_dir: Path, run_id: str) -> Path:
    return Path(data_dir) / f"{run_id}.probes.csv"


def config_json_path(data_dir: Path, run_id: str) -> Path:
    return Path(data_dir) / f"{run_id}.config.json"


def write_run(run: ProcessRun, data_dir: Path) -> None:
    """Emit the run as samples CSV + probes CSV + config JSON."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    with open(samples_csv_path(data_dir, run.run_id), "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLES_HEADER)
        for s in range(run.duration_steps):
            writer.writerow([
                s, _fmt(run.pressure_mbar[s]), _fmt(run.wort_temp_c[s]),
                _fmt(run.ambient_temp_c[s]),
            ])
    with open(probes_csv_path(data_dir, run.run_id), "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PROBES_HEADER)
        for p in run.probes:
            writer.writerow([p.step, p.kind, _fmt(p.value), _fmt(p.removed_volume_l)])
    config_to_json(run.config, config_json_path(data_dir, run.run_id))


def read_samples_csv(path: Path) -> dict[str, np.ndarray]:
    rows = _read_csv(path, SAMPLES_HEADER)
    out = {
        "step": np.array([int(r[0]) for r in rows], dtype=np.int64),
        "pressure_mbar": np.array([float(r[1]) for r in rows], dtype=np.float64),
        "wort_temp_c": np.array([float(r[2]) for r in rows], dtype=np.float64),
        "ambient_temp_c": np.array([float(r[3]) for r in rows], dtype=np.float64),
    }
    if out["step"].size and not np.array_equal(out["step"], np.arange(out["step"].size)):
        raise ValidationError(f"{path}: step column must be 0..n-1 in order")
    return out


def read_probes_csv(path: Path) -> tuple[ProbeEvent, ...]:
    rows = _read_csv(path, PROBES_HEADER)
    return tuple(
        ProbeEvent(int(r[0]), r[1], float(r[2]), float(r[3])) for r in rows
    )


def _read_csv(path: Path, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected header row") from None
        if header != expected_header:
            raise ValidationError(f"{path}: unexpected header {header!r}")
        return [row for row in reader if row]


def config_to_json(config: ProcessConfig, path: Path) -> None:
    doc = {
        "initial_plato": config.initial_plato,
        "final_plato": config.final_plato,
        "volume_l": config.volume_l,
        "fill_height_m": config.fill_height_m,
        "duration_steps": config.duration_steps,
        "lag_steps": config.lag_steps,
        "rate_k": config.rate_k,
        "ambient_mean_c": config.ambient_mean_c,
        "ambient_amp_c": config.ambient_amp_c,
        "wort_initial_c": config.wort_initial_c,
        "airlock_cap_mbar": config.airlock_cap_mbar,
        "probe_schedule": [{"step": s, "kind": k} for s, k in config.probe_schedule],
        "noise_sd": {
            name: getattr(config.noise_sd, name)
            for name in NoiseLevels.__dataclass_fields__
        },
        "rng_seed": config.rng_seed,
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def config_from_json(path: Path) -> ProcessConfig:
    with open(path) as fh:
        doc = json.load(fh)
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> ProcessConfig:
    doc = dict(doc)
    if "probe_schedule" in doc and doc["probe_schedule"] is not None:
        doc["probe_schedule"] = tuple(
            (entry["step"], entry["kind"]) for entry in doc["probe_schedule"]
        )
    if "noise_sd" in doc and not isinstance(doc["noise_sd"], NoiseLevels):
        doc["noise_sd"] = NoiseLevels(**doc["noise_sd"])
    unknown = set(doc) - set(ProcessConfig.__dataclass_fields__)
    if unknown:
        raise ValidationError(f"unknown config fields: {sorted(unknown)}")
    return ProcessConfig(**doc)


def read_run(data_dir: Path, run_id: str) -> ProcessRun:
    """Load a run from its CSV/JSON files.

    Measured series and probe events come from the files; the noise-free
    component series are reconstructed by re-running the deterministic
    simulator on the stored config.
    """
    data_dir = Path(data_dir)
    config = config_from_json(config_json_path(data_dir, run_id))
    twin = simulate_process(config, run_id=run_id)
    samples = read_samples_csv(samples_csv_path(data_dir, run_id))
    n = samples["pressure_mbar"].size
    if n != config.duration_steps:
        raise ValidationError(
            f"{run_id}: samples CSV has {n} rows, config says {config.duration_steps}"
        )
    probes = read_probes_csv(probes_csv_path(data_dir, run_id))
    return ProcessRun(
        run_id=run_id,
        config=config,
        pressure_mbar=samples["pressure_mbar"],
        wort_temp_c=samples["wort_temp_c"],
        ambient_temp_c=samples["ambient_temp_c"],
        true_plato=twin.true_plato,
        headspace_mbar=twin.headspace_mbar,
        hydrostatic_mbar=twin.hydrostatic_mbar,
        fill_m=twin.fill_m,
        probes=probes,
        initial_pressure_mbar=float(samples["pressure_mbar"][0]) if n else math.nan,
        initial_plato=float(twin.true_plato[0]) if n else config.initial_plato,
    )
