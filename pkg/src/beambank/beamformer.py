"""Fixed beamformer design: classical baselines and the null-steering,
WNG-constrained minimum-variance design, plus the multi-direction bank.

The constrained design minimizes h^H Phi h subject to h^H g = 1 and a
white-noise-gain floor written as the quadratic constraint
c = h^H Psi h <= 0 with Psi = I - g g^H * M / ||g||^2. On the
distortionless manifold the constraint set is a ball, so the KKT system
reduces exactly to diagonal loading: h(eps) = (Phi + eps I)^{-1} g,
normalized. ||h(eps)||^2 is non-increasing in eps, which makes c(eps)
monotone and a bisection on eps exact. The solver therefore returns the
global optimum, certifiable after the fact through verify_kkt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DataError,
    DegenerateSteeringError,
    IllConditionedError,
    ParseError,
    SolverError,
)
from .geometry import (
    SOUND_SPEED,
    ArrayGeometry,
    AtfSet,
    DirectionSpec,
    SteeringVector,
    _direction_from_dict,
    _direction_to_dict,
    steering_vector,
)
from .noise_model import (
    NoiseCovariance,
    PointNoiseSpec,
    composite_covariance,
    diffuse_covariance_sinc,
    regularize,
)

WNG_TOLERANCE = 1e-8
MAX_BISECTION_STEPS = 60
LOADING_CAP_SCALE = 1e6
DISTORTIONLESS_TOL = 1e-6

BANK_MAGIC = "beambank-bank-v1"

METHODS = ("delay_and_sum", "superdirective", "mvdr", "nlcmv")


@dataclass(frozen=True)
class BeamformerWeights:
    """Designed weights at one frequency, with solver diagnostics.

    ``objective`` is h^H Phi h against the design covariance,
    ``loading`` the diagonal loading level used to enforce the WNG
    constraint (0 when inactive), ``constraint`` the constraint value c,
    ``iterations`` the bisection step count.
    """

    frequency: float
    weights: np.ndarray
    objective: float = 0.0
    loading: float = 0.0
    constraint: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        if w.ndim != 1 or w.shape[0] < 1:
            raise DataError("weights must be a 1-D complex array")
        if not np.isfinite(w).all():
            raise SolverError(f"non-finite weights at {self.frequency} Hz")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def num_mics(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class DesignSpec:
    """One design task: method, look direction, null set, frequency grid."""

    method: str
    look: DirectionSpec
    nulls: tuple = ()
    frequencies: np.ndarray = field(default_factory=lambda: np.array([1000.0]))
    sound_speed: float = SOUND_SPEED
    wng_tolerance: float = WNG_TOLERANCE
    wng_margin: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise DataError(f"unknown method '{self.method}', expected one of {METHODS}")
        freqs = np.asarray(self.frequencies, dtype=float)
        if freqs.ndim != 1 or freqs.shape[0] < 1:
            raise DataError("frequency grid must be a non-empty 1-D array")
        if freqs[0] < 0 or np.any(np.diff(freqs) <= 0):
            raise DataError("frequency grid must be non-negative and strictly increasing")
        if not self.wng_margin > 0:
            raise DataError(f"wng margin {self.wng_margin} must be > 0")
        object.__setattr__(self, "nulls", tuple(self.nulls))
        object.__setattr__(self, "frequencies", freqs)


def wng_constraint_matrix(g: SteeringVector, margin: float = 1.0) -> np.ndarray:
    """Psi = I - g g^H * M / (margin * ||g||^2); c = h^H Psi h."""
    e = g.entries
    m = e.shape[0]
    norm_sq = np.vdot(e, e).real
    return np.eye(m, dtype=complex) - np.outer(e, e.conj()) * (m / (margin * norm_sq))


def wng_constraint_value(h: np.ndarray, g: SteeringVector, margin: float = 1.0) -> float:
    """Constraint value c = h^H Psi h; c <= 0 keeps white noise gain at or
    above margin * ||g||^2 / M (for distortionless h)."""
    h = np.asarray(h, dtype=complex)
    psi = wng_constraint_matrix(g, margin)
    return float(np.vdot(h, psi @ h).real)


def _weights_of(h) -> np.ndarray:
    if isinstance(h, BeamformerWeights):
        return h.weights
    return np.asarray(h, dtype=complex)


def _check_steering(g: SteeringVector):
    if float(np.vdot(g.entries, g.entries).real) <= 0.0:
        raise DegenerateSteeringError("steering vector has zero norm")


def _single_channel(g: SteeringVector) -> np.ndarray:
    # distortionless with M = 1 forces conj(h) G = 1, i.e. the applied filter is 1/G
    return np.array([1.0 / np.conj(g.entries[0])])


def _loaded_solve(matrix: np.ndarray, g: np.ndarray, eps: float) -> np.ndarray:
    """h(eps) = (Phi + eps I)^{-1} g / (g^H (Phi + eps I)^{-1} g)."""
    a = matrix if eps == 0.0 else matrix + eps * np.eye(matrix.shape[0])
    try:
        x = scipy.linalg.solve(a, g, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        cond = float(np.linalg.cond(a))
        raise IllConditionedError(
            f"covariance solve failed (condition estimate {cond:.3e})"
        ) from exc
    denom = np.vdot(g, x)
    if not np.isfinite(denom.real) or denom.real <= 0.0:
        cond = float(np.linalg.cond(a))
        raise IllConditionedError(
            f"degenerate normalization g^H P^-1 g = {denom:.3e} "
            f"(condition estimate {cond:.3e})"
        )
    return x / denom


def _assert_distortionless(h: np.ndarray, g: SteeringVector, label: str):
    err = abs(np.vdot(h, g.entries) - 1.0)
    if err > DISTORTIONLESS_TOL:
        raise SolverError(f"{label}: distortionless violated by {err:.3e}")


def design_delay_and_sum(g: SteeringVector, phi: NoiseCovariance | None = None) -> BeamformerWeights:
    """Matched-filter weights h = g / ||g||^2; maximal white noise gain."""
    _check_steering(g)
    if g.num_mics == 1:
        h = _single_channel(g)
    else:
        h = g.entries / np.vdot(g.entries, g.entries).real
    _assert_distortionless(h, g, "delay_and_sum")
    objective = float(np.vdot(h, phi.matrix @ h).real) if phi is not None else float(
        np.vdot(h, h).real
    )
    return BeamformerWeights(
        frequency=g.frequency,
        weights=h,
        objective=objective,
        constraint=wng_constraint_value(h, g),
    )


def design_mvdr(phi: NoiseCovariance, g: SteeringVector) -> BeamformerWeights:
    """Minimum variance distortionless weights h = Phi^{-1} g / (g^H Phi^{-1} g).

    Near-singular covariances are diagonally loaded first (idempotent, see
    noise_model.regularize). No white-noise-gain constraint is applied;
    the diagnostics still record the constraint value.
    """
    _check_steering(g)
    if g.num_mics != phi.num_mics:
        raise DataError(f"{g.num_mics}-channel steering vs {phi.num_mics}-channel covariance")
    if g.num_mics == 1:
        h = _single_channel(g)
    else:
        h = _loaded_solve(regularize(phi).matrix, g.entries, 0.0)
    _assert_distortionless(h, g, "mvdr")
    return BeamformerWeights(
        frequency=g.frequency,
        weights=h,
        objective=float(np.vdot(h, phi.matrix @ h).real),
        constraint=wng_constraint_value(h, g),
    )


def design_superdirective(phi_dd: NoiseCovariance, g: SteeringVector) -> BeamformerWeights:
    """MVDR against the diffuse-field covariance."""
    return design_mvdr(phi_dd, g)


def design_nlcmv(
    phi_total: NoiseCovariance,
    g: SteeringVector,
    wng_tolerance: float = WNG_TOLERANCE,
    wng_margin: float = 1.0,
) -> BeamformerWeights:
    """Minimize h^H Phi h subject to h^H g = 1 and the WNG constraint c <= 0.

    Returns the unconstrained MVDR solution when it is already feasible;
    otherwise bisects the diagonal loading level until the constraint
    boundary is hit. The stop rule demands both |c| <= wng_tolerance and
    loading * |c| <= wng_tolerance so complementary slackness certifies,
    within a fixed step budget; the feasible bracket side is returned.
    """
    _check_steering(g)
    if g.num_mics != phi_total.num_mics:
        raise DataError(
            f"{g.num_mics}-channel steering vs {phi_total.num_mics}-channel covariance"
        )
    if g.num_mics == 1:
        h = _single_channel(g)
        return BeamformerWeights(
            frequency=g.frequency,
            weights=h,
            objective=float(np.vdot(h, phi_total.matrix @ h).real),
            constraint=wng_constraint_value(h, g, wng_margin),
        )

    matrix = regularize(phi_total).matrix
    trace = float(np.trace(matrix).real)
    m = g.num_mics
    cap = LOADING_CAP_SCALE * trace / m

    h = _loaded_solve(matrix, g.entries, 0.0)
    c = wng_constraint_value(h, g, wng_margin)
    if c <= 0.0:
        out = BeamformerWeights(
            frequency=g.frequency,
            weights=h,
            objective=float(np.vdot(h, phi_total.matrix @ h).real),
            constraint=c,
        )
        _assert_distortionless(h, g, "nlcmv")
        return out

    # c(0) > 0: expand a bracket geometrically, then bisect. c(eps) is
    # monotone non-increasing, and the delay-and-sum limit (eps -> inf)
    # is strictly feasible, so a sign change must appear below the cap.
    steps = 0
    lo, c_lo = 0.0, c
    hi = trace / m * 1e-6
    c_hi = None
    while steps < MAX_BISECTION_STEPS:
        steps += 1
        h_hi = _loaded_solve(matrix, g.entries, hi)
        c_hi = wng_constraint_value(h_hi, g, wng_margin)
        if c_hi <= 0.0:
            break
        lo, c_lo = hi, c_hi
        hi *= 10.0
        if hi > cap:
            raise SolverError(
                f"internal solver failure: no feasible loading below cap {cap:.3e} "
                f"at {g.frequency} Hz (c = {c_hi:.3e})"
            )
    if c_hi is None or c_hi > 0.0:
        raise SolverError(
            f"internal solver failure: bracket expansion exhausted {steps} steps "
            f"at {g.frequency} Hz"
        )

    best_eps, best_h, best_c = hi, h_hi, c_hi
    while steps < MAX_BISECTION_STEPS:
        if abs(best_c) <= wng_tolerance and best_eps * abs(best_c) <= wng_tolerance:
            break
        steps += 1
        mid = 0.5 * (lo + hi)
        h_mid = _loaded_solve(matrix, g.entries, mid)
        c_mid = wng_constraint_value(h_mid, g, wng_margin)
        if c_mid <= 0.0:
            hi, best_eps, best_h, best_c = mid, mid, h_mid, c_mid
        else:
            lo = mid

    _assert_distortionless(best_h, g, "nlcmv")
    if best_c > wng_tolerance:
        raise SolverError(
            f"internal solver failure: returned infeasible c = {best_c:.3e} "
            f"at {g.frequency} Hz"
        )
    return BeamformerWeights(
        frequency=g.frequency,
        weights=best_h,
        objective=float(np.vdot(best_h, phi_total.matrix @ best_h).real),
        loading=best_eps,
        constraint=best_c,
        iterations=steps,
    )


@dataclass(frozen=True)
class KktReport:
    """Post-hoc optimality certificate for one constrained design."""

    stationarity_residual: float
    stationarity_bound: float
    distortionless_error: float
    constraint_value: float
    slackness: float
    slackness_bound: float

    @property
    def stationarity_ok(self) -> bool:
        return self.stationarity_residual <= self.stationarity_bound

    @property
    def feasible(self) -> bool:
        return (
            self.distortionless_error <= DISTORTIONLESS_TOL
            and self.constraint_value <= DISTORTIONLESS_TOL
        )

    @property
    def slackness_ok(self) -> bool:
        return self.slackness <= self.slackness_bound

    @property
    def passed(self) -> bool:
        return self.stationarity_ok and self.feasible and self.slackness_ok


def verify_kkt(
    result: BeamformerWeights,
    phi_total: NoiseCovariance,
    g: SteeringVector,
    wng_margin: float = 1.0,
    slackness_bound: float = 1e-8,
) -> KktReport:
    """Check stationarity, feasibility, and complementary slackness of a
    constrained design against the supplied covariance.

    The equality multiplier is recovered by least squares,
    lambda = g^H (Phi + eps I) h / ||g||^2. Any diagonal loading the
    solver added for conditioning shifts the residual by at most
    delta * ||h|| with delta <= 1e-6 * ||Phi||, inside the bound.
    """
    h = result.weights
    eps = result.loading
    a_h = phi_total.matrix @ h + eps * h
    e = g.entries
    lam = np.vdot(e, a_h) / np.vdot(e, e).real
    residual = float(np.linalg.norm(a_h - lam * e))
    phi_norm = float(np.linalg.norm(phi_total.matrix, 2))
    h_norm = float(np.linalg.norm(h))
    c = wng_constraint_value(h, g, wng_margin)
    return KktReport(
        stationarity_residual=residual,
        stationarity_bound=1e-6 * h_norm * phi_norm,
        distortionless_error=float(abs(np.vdot(h, e) - 1.0)),
        constraint_value=c,
        slackness=float(abs(eps * c)),
        slackness_bound=slackness_bound,
    )


def _design_one(
    method: str,
    phi_dd: NoiseCovariance,
    phi_total: NoiseCovariance,
    g: SteeringVector,
    wng_tolerance: float,
    wng_margin: float,
) -> BeamformerWeights:
    if method == "delay_and_sum":
        return design_delay_and_sum(g, phi_total)
    if method == "superdirective":
        return design_superdirective(phi_dd, g)
    if method == "mvdr":
        return design_mvdr(phi_total, g)
    if method == "nlcmv":
        return design_nlcmv(phi_total, g, wng_tolerance, wng_margin)
    raise DataError(f"unknown method '{method}'")


@dataclass
class BeamformerBank:
    """Per-direction, per-frequency weights for the K+1 steering directions.

    ``weights`` has shape (K+1, F, M). Exactly one direction is the
    near-field mouth entry; the rest are far-field horizontal looks.
    """

    geometry: ArrayGeometry
    directions: list[DirectionSpec]
    frequencies: np.ndarray
    weights: np.ndarray
    fs: int
    n_fft: int
    method: str
    nulls: tuple = ()
    sound_speed: float = SOUND_SPEED
    wng_tolerance: float = WNG_TOLERANCE
    wng_margin: float = 1.0
    atf_source: str = "freefield"
    loading: np.ndarray | None = None
    constraint: np.ndarray | None = None
    iterations: np.ndarray | None = None
    objective: np.ndarray | None = None

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.weights = np.asarray(self.weights, dtype=complex)
        self.nulls = tuple(self.nulls)
        near = sum(1 for d in self.directions if d.is_near_field)
        if near != 1:
            raise DataError(f"bank needs exactly one near-field (mouth) entry, found {near}")
        if len(self.directions) < 2:
            raise DataError("bank needs at least one horizontal direction plus the mouth")
        expect = (len(self.directions), self.frequencies.shape[0], self.geometry.num_mics)
        if self.weights.shape != expect:
            raise DataError(f"bank weights shape {self.weights.shape}, expected {expect}")

    @property
    def num_directions(self) -> int:
        return len(self.directions)

    @property
    def num_mics(self) -> int:
        return self.geometry.num_mics

    def entry(self, direction_index: int, frequency_index: int) -> BeamformerWeights:
        def pick(arr, default):
            return default if arr is None else arr[direction_index, frequency_index]

        return BeamformerWeights(
            frequency=float(self.frequencies[frequency_index]),
            weights=self.weights[direction_index, frequency_index].copy(),
            objective=float(pick(self.objective, 0.0)),
            loading=float(pick(self.loading, 0.0)),
            constraint=float(pick(self.constraint, 0.0)),
            iterations=int(pick(self.iterations, 0)),
        )

    def direction_labels(self) -> list[str]:
        return [d.label() for d in self.directions]


def design_bank(
    geometry: ArrayGeometry,
    directions: list[DirectionSpec],
    method: str = "nlcmv",
    nulls: tuple = (),
    fs: int = 16000,
    n_fft: int = 512,
    sound_speed: float = SOUND_SPEED,
    wng_tolerance: float = WNG_TOLERANCE,
    wng_margin: float = 1.0,
    atfs: AtfSet | None = None,
) -> BeamformerBank:
    """Design one beamformer per direction per FFT bin.

    Frequencies are the rfft bin centers for (fs, n_fft). Look steering
    vectors come from ``atfs`` when given (all directions and bins must be
    on its grid), else from the analytic model. Null steering always uses
    the analytic model. Deterministic given identical inputs.
    """
    if method not in METHODS:
        raise DataError(f"unknown method '{method}', expected one of {METHODS}")
    near = [d for d in directions if d.is_near_field]
    if len(near) != 1 or len(directions) < 2:
        raise DataError("directions must be K >= 1 horizontal looks plus one mouth point")
    freqs = np.fft.rfftfreq(n_fft, 1.0 / fs)
    k1, f_count, m = len(directions), freqs.shape[0], geometry.num_mics
    weights = np.empty((k1, f_count, m), dtype=complex)
    loading = np.zeros((k1, f_count))
    constraint = np.zeros((k1, f_count))
    iterations = np.zeros((k1, f_count), dtype=int)
    objective = np.zeros((k1, f_count))

    atf_index = {}
    if atfs is not None:
        if atfs.num_mics != m:
            raise DataError(f"ATF set is {atfs.num_mics}-channel, geometry has {m}")
        for di, d in enumerate(directions):
            atf_index[di] = atfs.index_of(d)

    for fi, f in enumerate(freqs):
        phi_dd = diffuse_covariance_sinc(geometry, f, sound_speed)
        phi_total = composite_covariance(phi_dd, list(nulls), geometry, sound_speed)
        for di, direction in enumerate(directions):
            if atfs is not None:
                g = atfs.steering(atf_index[di], f)
            else:
                g = steering_vector(geometry, direction, f, sound_speed)
            try:
                w = _design_one(method, phi_dd, phi_total, g, wng_tolerance, wng_margin)
            except SolverError as exc:
                raise SolverError(f"{direction.label()} at {f:.1f} Hz: {exc}") from exc
            weights[di, fi] = w.weights
            loading[di, fi] = w.loading
            constraint[di, fi] = w.constraint
            iterations[di, fi] = w.iterations
            objective[di, fi] = w.objective

    return BeamformerBank(
        geometry=geometry,
        directions=list(directions),
        frequencies=freqs,
        weights=weights,
        fs=int(fs),
        n_fft=int(n_fft),
        method=method,
        nulls=tuple(nulls),
        sound_speed=float(sound_speed),
        wng_tolerance=float(wng_tolerance),
        wng_margin=float(wng_margin),
        atf_source="freefield" if atfs is None else "file",
        loading=loading,
        constraint=constraint,
        iterations=iterations,
        objective=objective,
    )


def save_bank(bank: BeamformerBank, path) -> None:
    """Write a bank: one JSON header line, then the (K+1, F, M) weights as
    little-endian complex128 (interleaved re/im float64); bit-exact."""
    nulls = []
    for spec in bank.nulls:
        if callable(spec.psd):
            raise DataError("cannot serialize a bank whose null psd is a callable")
        nulls.append(
            {
                "direction": _direction_to_dict(spec.direction),
                "weight": spec.weight,
                "psd": spec.psd,
            }
        )
    header = {
        "magic": BANK_MAGIC,
        "geometry": {
            "id": bank.geometry.id,
            "mics": [[float(v) for v in row] for row in bank.geometry.mics],
        },
        "directions": [_direction_to_dict(d) for d in bank.directions],
        "fs": bank.fs,
        "n_fft": bank.n_fft,
        "method": bank.method,
        "nulls": nulls,
        "sound_speed": bank.sound_speed,
        "wng_tolerance": bank.wng_tolerance,
        "wng_margin": bank.wng_margin,
        "atf_source": bank.atf_source,
        "diagnostics": {
            "loading": None if bank.loading is None else bank.loading.tolist(),
            "constraint": None if bank.constraint is None else bank.constraint.tolist(),
            "iterations": None if bank.iterations is None else bank.iterations.tolist(),
            "objective": None if bank.objective is None else bank.objective.tolist(),
        },
    }
    payload = np.ascontiguousarray(bank.weights, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes())


def load_bank(path) -> BeamformerBank:
    """Read a bank written by :func:`save_bank`."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: bad bank header: {exc}") from exc
    if header.get("magic") != BANK_MAGIC:
        raise ParseError(f"{path}: not a bank file (missing magic)")
    try:
        geometry = ArrayGeometry(
            id=str(header["geometry"]["id"]),
            mics=np.asarray(header["geometry"]["mics"], dtype=float),
        )
        directions = [_direction_from_dict(d) for d in header["directions"]]
        fs = int(header["fs"])
        n_fft = int(header["n_fft"])
        method = str(header["method"])
        nulls = tuple(
            PointNoiseSpec(
                direction=_direction_from_dict(item["direction"]),
                weight=float(item["weight"]),
                psd=float(item["psd"]),
            )
            for item in header.get("nulls", [])
        )
        sound_speed = float(header.get("sound_speed", SOUND_SPEED))
        wng_tolerance = float(header.get("wng_tolerance", WNG_TOLERANCE))
        wng_margin = float(header.get("wng_margin", 1.0))
        atf_source = str(header.get("atf_source", "freefield"))
        diag = header.get("diagnostics") or {}
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad bank header field: {exc}") from exc
    freqs = np.fft.rfftfreq(n_fft, 1.0 / fs)
    expected = len(directions) * freqs.shape[0] * geometry.num_mics
    data = np.frombuffer(blob, dtype="<c16")
    if data.shape[0] != expected:
        raise ParseError(
            f"{path}: payload holds {data.shape[0]} values, header implies {expected}"
        )
    weights = data.reshape(len(directions), freqs.shape[0], geometry.num_mics).copy()

    def pick(key, dtype):
        value = diag.get(key)
        return None if value is None else np.asarray(value, dtype=dtype)

    return BeamformerBank(
        geometry=geometry,
        directions=directions,
        frequencies=freqs,
        weights=weights,
        fs=fs,
        n_fft=n_fft,
        method=method,
        nulls=nulls,
        sound_speed=sound_speed,
        wng_tolerance=wng_tolerance,
        wng_margin=wng_margin,
        atf_source=atf_source,
        loading=pick("loading", float),
        constraint=pick("constraint", float),
        iterations=pick("iterations", int),
        objective=pick("objective", float),
    )
