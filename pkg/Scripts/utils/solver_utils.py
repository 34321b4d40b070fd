"""
This module implements the Learning Regularized Functional Matching
Pursuit. Starting from f_0 = 0 it greedily adds the dictionary element
that reduces the noise-cognizant Tikhonov-Phillips functional

    J(f) = ||(y - T f) / sigma||^2 + lambda ||f||_H1^2

the most, optionally competing against hat functions learned by
learning_utils on the newest ray package. Rays are activated package by
package as the relative data error drops. The module also holds the
starting dictionary, the iteration ledger and the lambda model selection.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

import config
from Scripts.utils.basis_utils import expansion_eval
from Scripts.utils.config_utils import DictionarySettings, RunConfig, make_rng
from Scripts.utils.dspo_utils import dspo_matrix_column, poly_matrix
from Scripts.utils.geometry_utils import (
    DEFAULT_BOUNDS,
    TWO_PI,
    DictionaryElement,
    PolyIndex,
    TesseroidBounds,
    TesseroidParams,
    element_sort_key,
    element_to_dict,
)
from Scripts.utils.gram_utils import (
    GramCache,
    h1_fehf_fehf,
    h1_fehf_polys,
    h1_inner,
    h1_poly_poly,
    mixed_products,
)
from Scripts.utils.learning_utils import LearningResult, OptimizerBudget, learn_fehf
from Scripts.utils.ray_utils import RaySet
from Scripts.utils.scenario_utils import EvalGrid, grid_values, rrmse

STOP_REASONS = ("max_iter", "noise_floor", "blow_up", "chi2", "no_improvement")


class ZeroElementError(ArithmeticError):
    """Raised when B_N(d) = 0, i.e. the element is zero in data and H1 norm."""


# _________________________________________________________________________________________________


@dataclass
class Expansion:
    """
    The approximation f_N = f_0 + sum alpha_n d_n.

    Attributes:
        terms (list[tuple[float, DictionaryElement]]): Chosen (alpha, d) in
            selection order.
        f0 (callable | None): Initial field on SphericalPoint; None is zero.
    """

    terms: list = field(default_factory=list)
    f0: object = None

    def __len__(self) -> int:
        return len(self.terms)

    def __call__(self, p):
        return expansion_eval(self, p)

    def add(self, alpha: float, d: DictionaryElement) -> None:
        self.terms.append((float(alpha), d))

    def poly_coefficients(self) -> dict[PolyIndex, float]:
        """Summed coefficient per polynomial index."""
        coefficients: dict[PolyIndex, float] = {}
        for alpha, d in self.terms:
            if isinstance(d, PolyIndex):
                coefficients[d] = coefficients.get(d, 0.0) + alpha
        return coefficients

    def fehf_terms(self) -> list[tuple[float, TesseroidParams]]:
        return [(alpha, d) for alpha, d in self.terms if isinstance(d, TesseroidParams)]


@dataclass(frozen=True)
class SolverConfig:
    """Termination, scheduling and learning settings of one LRFMP run."""

    lambda_factors: tuple = tuple(config.LAMBDA_FACTORS)
    max_iterations: int = config.MAX_ITERATIONS
    noise_level: float = config.NOISE_LEVEL
    blow_up_threshold: float = config.BLOW_UP_THRESHOLD
    chi2_tolerance: float = config.CHI2_TOLERANCE
    no_improvement_threshold: float = config.NO_IMPROVEMENT_THRESHOLD
    package_size: int = config.PACKAGE_SIZE
    package_threshold: float = config.PACKAGE_THRESHOLD
    learning_enabled: bool = config.LEARNING_ENABLED
    budget: OptimizerBudget = OptimizerBudget()
    gk_tolerance: float = config.GK_TOLERANCE
    workers: int = config.THREADS

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "SolverConfig":
        sol, lrn = cfg.solver, cfg.learning
        return cls(
            lambda_factors=tuple(sol.lambda_factors),
            max_iterations=sol.max_iterations,
            noise_level=sol.noise_level,
            blow_up_threshold=sol.blow_up_threshold,
            chi2_tolerance=sol.chi2_tolerance,
            no_improvement_threshold=sol.no_improvement_threshold,
            package_size=sol.package_size,
            package_threshold=sol.package_threshold,
            learning_enabled=lrn.enabled,
            budget=OptimizerBudget(
                global_xtol_rel=lrn.global_xtol_rel,
                global_ftol_rel=lrn.global_ftol_rel,
                local_xtol_rel=lrn.local_xtol_rel,
                local_ftol_rel=lrn.local_ftol_rel,
                max_evaluations=lrn.max_evaluations,
                max_time_seconds=lrn.max_time_seconds,
            ),
            gk_tolerance=cfg.quadrature.gk_tolerance,
            workers=cfg.run.threads,
        )


# _________________________________________________________________________________________________


def _grid_axis(lo: float, hi: float, count: int) -> tuple[list[float], float]:
    """Equispaced centres from lo to hi and the spacing as half-width."""
    if count == 1:
        return [0.5 * (lo + hi)], 0.5 * (hi - lo)
    return [float(c) for c in np.linspace(lo, hi, count)], (hi - lo) / (count - 1)


def build_starting_dictionary(
    settings: DictionarySettings = DictionarySettings(),
    bounds: TesseroidBounds = DEFAULT_BOUNDS,
) -> list[DictionaryElement]:
    """
    The finite starting dictionary: every ball polynomial with m <= M,
    n <= N, |j| <= n, and the hat functions on an equispaced centre grid
    spanning the tesseroid box, with the grid spacing as half-widths.

    Args:
        settings (DictionarySettings): Degree caps and centre grid size.
        bounds (TesseroidBounds): Constraints of the hat functions.

    Returns:
        list[DictionaryElement]: Elements in canonical order.

    Raises:
        ValueError: On negative caps or grid sizes.
    """
    big_m, big_n = settings.max_radial_degree, settings.max_angular_degree
    sizes = tuple(settings.fehf_grid_size)
    if big_m < 0 or big_n < 0 or len(sizes) != 3 or min(sizes) < 0:
        raise ValueError(f"invalid dictionary settings {settings}")

    elements: list[DictionaryElement] = [
        PolyIndex(m, n, j)
        for m in range(big_m + 1)
        for n in range(big_n + 1)
        for j in range(-n, n + 1)
    ]

    if min(sizes) > 0:
        radii, d_r = _grid_axis(bounds.r_min, bounds.r_max, sizes[0])
        longitudes, d_phi = _grid_axis(0.0, TWO_PI, sizes[1])
        cosines, d_t = _grid_axis(bounds.t_min, bounds.t_max, sizes[2])
        d_r = min(max(d_r, bounds.eps_r), bounds.ball_radius / 2.0)
        d_phi = min(max(d_phi, bounds.eps_phi), math.pi)
        d_t = min(max(d_t, bounds.eps_t), 0.5)
        elements += [
            TesseroidParams(r, phi, t, d_r, d_phi, d_t, bounds)
            for r in radii
            for phi in longitudes
            for t in cosines
        ]
    return sorted(elements, key=element_sort_key)


# _________________________________________________________________________________________________


@dataclass
class DictionaryData:
    """
    A starting dictionary with its operator columns over all rays and its
    H1 Gram matrix.
    """

    elements: list
    columns: np.ndarray
    gram: np.ndarray

    def __post_init__(self):
        self.index = {}
        for k, d in enumerate(self.elements):
            self.index.setdefault(d, k)
        self.poly_positions = np.array(
            [k for k, d in enumerate(self.elements) if isinstance(d, PolyIndex)],
            dtype=int,
        )
        self.fehf_positions = np.array(
            [k for k, d in enumerate(self.elements) if isinstance(d, TesseroidParams)],
            dtype=int,
        )

    @property
    def polynomials(self) -> list[PolyIndex]:
        return [self.elements[k] for k in self.poly_positions]

    @property
    def fehfs(self) -> list[TesseroidParams]:
        return [self.elements[k] for k in self.fehf_positions]


def dictionary_gram(
    elements: list[DictionaryElement],
    cache: GramCache | None = None,
    progress: bool = False,
) -> np.ndarray:
    """
    H1 Gram matrix of a dictionary. Polynomial pairs use the Kronecker
    structure, mixed pairs the factorized products of each hat function
    with all polynomials at once, hat pairs go through the cache.
    """
    cache = GramCache() if cache is None else cache
    size = len(elements)
    gram = np.zeros((size, size))
    polys = [k for k, d in enumerate(elements) if isinstance(d, PolyIndex)]
    fehfs = [k for k, d in enumerate(elements) if isinstance(d, TesseroidParams)]

    for a in polys:
        for b in polys:
            da, db = elements[a], elements[b]
            if b >= a and (da.n, da.j) == (db.n, db.j):
                gram[a, b] = gram[b, a] = h1_poly_poly(da, db)

    poly_indices = [elements[k] for k in polys]
    for a in tqdm(
        fehfs,
        desc="Gram rows",
        unit="fehf",
        dynamic_ncols=True,
        disable=not progress,
    ):
        if polys:
            row = mixed_products(elements[a], poly_indices)
            gram[a, polys] = row
            gram[polys, a] = row
        for b in fehfs:
            if b >= a:
                gram[a, b] = gram[b, a] = cache.get(elements[a], elements[b])
    return gram


def assemble_dictionary(
    elements: list[DictionaryElement],
    rays: RaySet,
    workers: int = config.THREADS,
    tol: float = config.GK_TOLERANCE,
    cache: GramCache | None = None,
    progress: bool = False,
) -> DictionaryData:
    """
    Operator columns over every ray and the Gram matrix of a dictionary.

    Args:
        elements (list[DictionaryElement]): Dictionary, canonical order.
        rays (RaySet): All rays.
        workers (int): Thread count for the ray loops.
        tol (float): Relative quadrature tolerance of the line integrals.
        cache (GramCache | None): Shared cache for hat function pairs.
        progress (bool): Show tqdm bars.

    Returns:
        DictionaryData: Columns of shape (n_rays, K) and the K x K Gram.
    """
    columns = np.zeros((len(rays), len(elements)))
    polys = [k for k, d in enumerate(elements) if isinstance(d, PolyIndex)]
    if polys:
        columns[:, polys] = poly_matrix(
            [elements[k] for k in polys], rays, None, workers=workers, tol=tol
        )
    fehfs = [k for k, d in enumerate(elements) if isinstance(d, TesseroidParams)]
    for k in tqdm(
        fehfs,
        desc="DSPO columns",
        unit="fehf",
        dynamic_ncols=True,
        disable=not progress,
    ):
        columns[:, k] = dspo_matrix_column(
            elements[k], rays, None, workers=workers, tol=tol
        )
    gram = dictionary_gram(elements, cache, progress)
    return DictionaryData(list(elements), columns, gram)


# _________________________________________________________________________________________________


@dataclass
class SolverState:
    """
    Mutable state of one LRFMP run.

    Attributes:
        rays (RaySet): All rays with their packages.
        dictionary (DictionaryData): The starting dictionary.
        lam (float): Regularization parameter lambda.
        settings (SolverConfig): Run settings.
        expansion (Expansion): Current approximation f_N.
        active_packages (int): Number of leading packages in use.
        residual (np.ndarray): y - T f_N over the active rays.
        penalty (np.ndarray): <f_N, d_k>_H1 for every dictionary element.
        f_norm_sq (float): ||f_N||_H1^2.
        term_columns (list[np.ndarray]): T d_n over all rays per term.
        ledger (list[dict]): One row per iteration, row 0 for f_0.
        cache (GramCache): Inner products among hat functions.
    """

    rays: RaySet
    dictionary: DictionaryData
    lam: float
    settings: SolverConfig
    expansion: Expansion = field(default_factory=Expansion)
    active_packages: int = 1
    residual: np.ndarray = None
    penalty: np.ndarray = None
    f_norm_sq: float = 0.0
    term_columns: list = field(default_factory=list)
    ledger: list = field(default_factory=list)
    cache: GramCache = field(default_factory=GramCache)

    @property
    def iteration(self) -> int:
        return len(self.expansion)

    @property
    def active_stop(self) -> int:
        return self.rays.packages[self.active_packages - 1][1]

    @property
    def newest_package(self) -> tuple[int, int]:
        return self.rays.packages[self.active_packages - 1]

    @property
    def y_active(self) -> np.ndarray:
        return self.rays.delays[: self.active_stop]

    @property
    def sigma_active(self) -> np.ndarray:
        return self.rays.sigmas[: self.active_stop]


def init_state(
    rays: RaySet, dictionary: DictionaryData, lam: float, settings: SolverConfig
) -> SolverState:
    """State for f_0 = 0 with the first package active."""
    if len(rays) == 0:
        raise ValueError("the solver needs at least one ray")
    state = SolverState(rays, dictionary, float(lam), settings)
    state.residual = state.y_active.copy()
    state.penalty = np.zeros(len(dictionary.elements))
    return state


# _________________________________________________________________________________________________


def tikhonov_functional(state: SolverState) -> float:
    """J = ||R / sigma||^2 + lambda ||f_N||_H1^2 over the active rays."""
    weighted = state.residual / state.sigma_active
    return float(weighted @ weighted) + state.lam * state.f_norm_sq


def relative_data_error(state: SolverState) -> float:
    """||R^N|| / ||y_active||."""
    y_norm = float(np.linalg.norm(state.y_active))
    r_norm = float(np.linalg.norm(state.residual))
    if y_norm == 0.0:
        return 0.0 if r_norm == 0.0 else math.inf
    return r_norm / y_norm


def chi2_red(state: SolverState) -> float:
    """(1 / l) ||R^N / sigma||^2 over the l active rays."""
    weighted = state.residual / state.sigma_active
    return float(weighted @ weighted) / len(weighted)


def learned_fehf_share(ledger: list[dict]) -> float | None:
    """
    Fraction of hat function iterations won by an optimizer candidate, that
    is, where learning beat every hat function of the starting grid.
    None if no hat function was chosen.
    """
    sources = [row["source"] for row in ledger if row["kind"] == "fehf"]
    if not sources:
        return None
    return sources.count("learned") / len(sources)



def residual_from_scratch(state: SolverState) -> np.ndarray:
    """y - T f_N over the active rays, summed from the stored term columns."""
    stop = state.active_stop
    residual = state.y_active.copy()
    for (alpha, _), column in zip(state.expansion.terms, state.term_columns):
        residual -= alpha * column[:stop]
    return residual


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class Candidate:
    """
    An element with its objective terms over the active rays.

    Attributes:
        element (DictionaryElement): The element d.
        value (float): A^2 / B.
        numerator (float): A_N(d).
        denominator (float): B_N(d).
        penalty (float): <f_N, d>_H1.
        norm_sq (float): ||d||_H1^2.
        column (np.ndarray): T d over the active rays.
        source (str): "dictionary" or "learned".
        position (int | None): Index in the starting dictionary.
    """

    element: DictionaryElement
    value: float
    numerator: float
    denominator: float
    penalty: float
    norm_sq: float
    column: np.ndarray
    source: str
    position: int | None = None

    @property
    def alpha(self) -> float:
        return self.numerator / self.denominator


def _terms(state: SolverState, column: np.ndarray, penalty: float, norm_sq: float):
    weights = 1.0 / state.sigma_active**2
    numerator = float((state.residual * weights) @ column) - state.lam * penalty
    denominator = float((column * weights) @ column) + state.lam * norm_sq
    return numerator, denominator


def dictionary_objectives(
    state: SolverState,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Objective of every starting dictionary element at once.

    Returns:
        tuple: (values, A, B); elements with B = 0 get value 0.
    """
    stop = state.active_stop
    columns = state.dictionary.columns[:stop]
    weights = 1.0 / state.sigma_active**2
    numerators = (state.residual * weights) @ columns - state.lam * state.penalty
    denominators = np.einsum(
        "ik,i,ik->k", columns, weights, columns
    ) + state.lam * np.diag(state.dictionary.gram)
    values = np.zeros_like(numerators)
    positive = denominators > 0.0
    values[positive] = numerators[positive] ** 2 / denominators[positive]
    return values, numerators, denominators


def _penalty(state: SolverState, d: DictionaryElement) -> float:
    """<f_N, d>_H1 for an element outside the starting dictionary."""
    if isinstance(d, TesseroidParams):
        total = h1_fehf_polys(d, state.expansion.poly_coefficients())
        for alpha, other in state.expansion.fehf_terms():
            total += alpha * h1_fehf_fehf(d, other)
        return float(total)
    return float(
        sum(alpha * h1_inner(other, d) for alpha, other in state.expansion.terms)
    )


def evaluate_candidate(
    d: DictionaryElement, state: SolverState, source: str = "dictionary"
) -> Candidate:
    """Objective terms of any element over the active rays."""
    position = state.dictionary.index.get(d)
    stop = state.active_stop
    if position is not None:
        column = state.dictionary.columns[:stop, position]
        penalty = float(state.penalty[position])
        norm_sq = float(state.dictionary.gram[position, position])
    else:
        column = dspo_matrix_column(
            d,
            state.rays,
            (0, stop),
            workers=state.settings.workers,
            tol=state.settings.gk_tolerance,
        )
        penalty = _penalty(state, d)
        norm_sq = h1_inner(d, d)
    numerator, denominator = _terms(state, column, penalty, norm_sq)
    value = numerator**2 / denominator if denominator > 0.0 else 0.0
    return Candidate(
        d, value, numerator, denominator, penalty, norm_sq, column, source, position
    )


def objective(d: DictionaryElement, state: SolverState) -> tuple[float, float, float]:
    """
    RFMP objective of an element.

    Args:
        d (DictionaryElement): Candidate element.
        state (SolverState): Current state.

    Returns:
        tuple[float, float, float]: (A^2 / B, A, B) with
        A = <R / sigma, T d / sigma> - lambda <f_N, d>_H1 and
        B = ||T d / sigma||^2 + lambda ||d||_H1^2.

    Raises:
        ZeroElementError: If B = 0.
    """
    candidate = evaluate_candidate(d, state)
    if candidate.denominator <= 0.0:
        raise ZeroElementError(f"B_N vanishes for {element_to_dict(d)}")
    return candidate.value, candidate.numerator, candidate.denominator


def coefficient(d: DictionaryElement, state: SolverState) -> float:
    """alpha = A_N(d) / B_N(d), the minimizer of J(f_N + alpha d)."""
    _, numerator, denominator = objective(d, state)
    return numerator / denominator


def preselect(state: SolverState) -> Candidate:
    """
    Best element of the starting dictionary. Ties go to the first element
    in canonical order.
    """
    if not state.dictionary.elements:
        raise ValueError("the starting dictionary is empty")
    values, _, _ = dictionary_objectives(state)
    position = int(np.argmax(values))
    return evaluate_candidate(state.dictionary.elements[position], state)


# _________________________________________________________________________________________________


def package_objective(state: SolverState):
    """
    Objective restricted to the newest active package, as a function of
    the hat function parameters. Used by the learning add-on.
    """
    start, stop = state.newest_package
    residual = state.residual[start:stop]
    weights = 1.0 / state.sigma_active[start:stop] ** 2
    poly_coefficients = state.expansion.poly_coefficients()
    fehf_terms = state.expansion.fehf_terms()

    def evaluate(tess: TesseroidParams) -> float:
        column = dspo_matrix_column(
            tess,
            state.rays,
            (start, stop),
            workers=state.settings.workers,
            tol=state.settings.gk_tolerance,
        )
        penalty = h1_fehf_polys(tess, poly_coefficients)
        for alpha, other in fehf_terms:
            penalty += alpha * h1_fehf_fehf(tess, other)
        numerator = float((residual * weights) @ column) - state.lam * penalty
        norm_sq = h1_fehf_fehf(tess, tess)
        denominator = float((column * weights) @ column) + state.lam * norm_sq
        return numerator**2 / denominator if denominator > 0.0 else 0.0

    return evaluate


def _gram_row(state: SolverState, d: DictionaryElement) -> np.ndarray:
    """<d, d_k>_H1 against every starting dictionary element."""
    dictionary = state.dictionary
    row = np.zeros(len(dictionary.elements))
    if isinstance(d, TesseroidParams):
        if len(dictionary.poly_positions):
            row[dictionary.poly_positions] = mixed_products(d, dictionary.polynomials)
        for k in dictionary.fehf_positions:
            row[k] = h1_fehf_fehf(d, dictionary.elements[k])
    else:
        for k, other in enumerate(dictionary.elements):
            row[k] = state.cache.get(d, other)
    return row


def _full_column(state: SolverState, candidate: Candidate) -> np.ndarray:
    """T d over every ray, reusing the active part of the candidate."""
    if candidate.position is not None:
        return state.dictionary.columns[:, candidate.position]
    stop = state.active_stop
    rest = dspo_matrix_column(
        candidate.element,
        state.rays,
        (stop, len(state.rays)),
        workers=state.settings.workers,
        tol=state.settings.gk_tolerance,
    )
    return np.concatenate([candidate.column, rest])


def accept(state: SolverState, candidate: Candidate) -> float:
    """
    Append alpha d to the expansion and update residual, norm and the
    penalty accumulator.

    Returns:
        float: The coefficient alpha.
    """
    alpha = candidate.alpha
    state.residual = state.residual - alpha * candidate.column
    state.f_norm_sq += (
        2.0 * alpha * candidate.penalty + alpha * alpha * candidate.norm_sq
    )
    if candidate.position is not None:
        row = state.dictionary.gram[candidate.position]
    else:
        row = _gram_row(state, candidate.element)
    state.penalty = state.penalty + alpha * row
    state.term_columns.append(_full_column(state, candidate))
    state.expansion.add(alpha, candidate.element)
    return alpha


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class StepRecord:
    """
    Outcome of one LRFMP step.

    Attributes:
        candidate (Candidate): Best candidate of the step.
        best_fehf_objective (float | None): Best starting-grid hat function.
        learning (LearningResult | None): Optimizer output, if it ran.
        accepted (bool): False on no improvement.
    """

    candidate: Candidate
    best_fehf_objective: float | None
    learning: LearningResult | None
    accepted: bool


def _ledger_row(state: SolverState, **fields) -> dict:
    row = {
        "iteration": state.iteration,
        "element": None,
        "kind": None,
        "source": None,
        "alpha": None,
        "objective": None,
        "best_fehf_objective": None,
        "learning_budget_exhausted": None,
        "tikhonov": tikhonov_functional(state),
        "relative_data_error": relative_data_error(state),
        "chi2_red": chi2_red(state),
        "active_packages": state.active_packages,
        "package_added": False,
        "stop_reason": None,
    }
    row.update(fields)
    return row


def lrfmp_step(
    state: SolverState, rng: np.random.Generator | None = None
) -> StepRecord:
    """
    One LRFMP iteration: preselect over the starting dictionary, learn hat
    functions on the newest package, accept the overall best candidate
    and append a ledger row.

    Args:
        state (SolverState): Current state, updated in place.
        rng (np.random.Generator | None): Optimizer sub-stream.

    Returns:
        StepRecord: The chosen candidate; accepted is False when its
        objective does not exceed the no-improvement threshold.
    """
    settings = state.settings
    values, _, _ = dictionary_objectives(state)
    best = evaluate_candidate(state.dictionary.elements[int(np.argmax(values))], state)
    fehf_positions = state.dictionary.fehf_positions
    best_fehf = float(values[fehf_positions].max()) if len(fehf_positions) else None

    learning = None
    if settings.learning_enabled and len(fehf_positions):
        rng = make_rng(config.SEED, "optimizer") if rng is None else rng
        cycle = fehf_positions[state.iteration % len(fehf_positions)]
        start = state.dictionary.elements[cycle]
        learning = learn_fehf(
            package_objective(state),
            start,
            settings.budget,
            seed=int(rng.integers(0, 2**31 - 1)),
            bounds=start.bounds,
        )
        for tess in learning.candidates[1:]:
            candidate = evaluate_candidate(tess, state, source="learned")
            if candidate.value > best.value:
                best = candidate

    if not best.value > settings.no_improvement_threshold:
        return StepRecord(best, best_fehf, learning, accepted=False)

    alpha = accept(state, best)
    state.ledger.append(
        _ledger_row(
            state,
            element=element_to_dict(best.element),
            kind="polynomial" if isinstance(best.element, PolyIndex) else "fehf",
            source=best.source,
            alpha=alpha,
            objective=best.value,
            best_fehf_objective=best_fehf,
            learning_budget_exhausted=(
                None if learning is None else learning.budget_exhausted
            ),
        )
    )
    return StepRecord(best, best_fehf, learning, accepted=True)


def schedule_packages(state: SolverState) -> bool:
    """
    Activate the next ray package when the relative data error drops
    below the threshold; the residual is rebuilt over the enlarged set.

    Returns:
        bool: True if a package was added.
    """
    if state.active_packages >= len(state.rays.packages):
        return False
    if not relative_data_error(state) < state.settings.package_threshold:
        return False
    state.active_packages += 1
    state.residual = residual_from_scratch(state)
    if state.ledger:
        state.ledger[-1]["package_added"] = True
    return True


def stop_reason(state: SolverState) -> str | None:
    """
    Termination test after a step. The noise and chi^2 criteria apply only
    once every package is active.
    """
    settings = state.settings
    error = relative_data_error(state)
    all_active = state.active_packages == len(state.rays.packages)
    if error > settings.blow_up_threshold:
        return "blow_up"
    if all_active and error < settings.noise_level:
        return "noise_floor"
    if all_active and abs(chi2_red(state) - 1.0) < settings.chi2_tolerance:
        return "chi2"
    if state.iteration >= settings.max_iterations:
        return "max_iter"
    return None


# _________________________________________________________________________________________________


@dataclass
class LRFMPResult:
    """Expansion, ledger and stop reason of one run."""

    expansion: Expansion
    ledger: list
    stop_reason: str
    state: SolverState


def run_lrfmp(
    rays: RaySet,
    dictionary: DictionaryData,
    lam: float,
    settings: SolverConfig = SolverConfig(),
    seed: int = config.SEED,
    progress: bool = False,
) -> LRFMPResult:
    """
    Iterate LRFMP steps under the divide-and-conquer schedule until a
    stop criterion holds.

    Args:
        rays (RaySet): Rays with delays; packaged by settings.package_size.
        dictionary (DictionaryData): Assembled starting dictionary.
        lam (float): Regularization parameter.
        settings (SolverConfig): Run settings.
        seed (int): Run seed; the optimizer sub-stream is derived from it.
        progress (bool): Show a tqdm bar over the iterations.

    Returns:
        LRFMPResult: The stop reason is also written to the last ledger row.
    """
    rays = rays.with_packages(settings.package_size)
    state = init_state(rays, dictionary, lam, settings)
    state.ledger.append(_ledger_row(state))
    rng = make_rng(seed, "optimizer")

    reason = "max_iter" if settings.max_iterations == 0 else None
    with tqdm(
        total=settings.max_iterations,
        desc=f"LRFMP lambda={lam:.3g}",
        unit="it",
        dynamic_ncols=True,
        disable=not progress,
    ) as pbar:
        while reason is None:
            record = lrfmp_step(state, rng)
            if not record.accepted:
                reason = "no_improvement"
                break
            pbar.update(1)
            schedule_packages(state)
            reason = stop_reason(state)
            pbar.set_postfix(rel_err=f"{state.ledger[-1]['relative_data_error']:.4f}")

    state.ledger[-1]["stop_reason"] = reason
    return LRFMPResult(state.expansion, state.ledger, reason, state)


# _________________________________________________________________________________________________


@dataclass
class ModelSelection:
    """
    Outcome of the lambda grid search.

    Attributes:
        lambda_factor (float): Chosen multiple of ||y||.
        lam (float): Chosen lambda.
        result (LRFMPResult): The run with that lambda.
        scores (list[dict]): {"lambda_factor", "lambda", "rrmse",
            "stop_reason", "iterations"} per grid point.
    """

    lambda_factor: float
    lam: float
    result: LRFMPResult
    scores: list


def select_model(
    rays: RaySet,
    dictionary: DictionaryData,
    settings: SolverConfig,
    truth: np.ndarray,
    grid: EvalGrid,
    seed: int = config.SEED,
    progress: bool = False,
) -> ModelSelection:
    """
    Run the LRFMP for every lambda = factor * ||y|| and keep the run with
    the lowest RRMSE against the truth on the grid; ties go to the
    smallest lambda.

    Args:
        rays (RaySet): Rays with (noisy) delays.
        dictionary (DictionaryData): Assembled starting dictionary.
        settings (SolverConfig): Run settings incl. the lambda factors.
        truth (np.ndarray): Ground truth values on the grid.
        grid (EvalGrid): Evaluation grid.
        seed (int): Run seed.
        progress (bool): Show tqdm bars.

    Returns:
        ModelSelection: The best run and the score of every grid point.
    """
    if not settings.lambda_factors:
        raise ValueError("the lambda grid is empty")
    y_norm = float(np.linalg.norm(rays.delays))
    best = None
    scores = []
    for factor in sorted(settings.lambda_factors):
        lam = factor * y_norm
        result = run_lrfmp(rays, dictionary, lam, settings, seed, progress)
        score = rrmse(truth, grid_values(result.expansion, grid))
        scores.append(
            {
                "lambda_factor": factor,
                "lambda": lam,
                "rrmse": score,
                "stop_reason": result.stop_reason,
                "iterations": len(result.expansion),
            }
        )
        if best is None or score < best[0]:
            best = (score, factor, lam, result)
    _, factor, lam, result = best
    return ModelSelection(factor, lam, result, scores)
