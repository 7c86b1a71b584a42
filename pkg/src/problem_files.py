"""
Problem files: a line-oriented text format holding the recourse costs, the
reference marginals, an optional Wasserstein ball or moment set, and an
optional first-stage block. The canonical writer prints every float with
%.17g so a dumped file parses back to an identical problem.
"""

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.config import get_config
from distributions import Distribution1D, ProductDistribution
from drsir_moment import MomentAmbiguitySet, MomentFunctionSpec
from drsir_wasserstein import WassersteinBall
from sir_core import CostVector, FirstStageProblem

SECTIONS = ('cost', 'distribution', 'ball', 'moments', 'first_stage')
_TOKEN = re.compile(r'\S+')


class ProblemFileError(ValueError):
    """Malformed problem file; carries the 1-based line and column of the offending token"""

    def __init__(self, message, line=None, column=None, source='<string>'):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        where = source
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


@dataclass
class ProblemFile:
    q: CostVector
    marginals: List[Distribution1D] = field(default_factory=list)
    ball_order: Optional[float] = None
    ball_radius: Optional[float] = None
    moments: Optional[MomentAmbiguitySet] = None
    first_stage: Optional[FirstStageProblem] = None

    @property
    def m(self) -> int:
        return self.q.m

    @property
    def reference(self) -> ProductDistribution:
        if not self.marginals:
            raise ValueError("The problem has no [distribution] block")
        return ProductDistribution(self.marginals)

    @property
    def has_ball(self) -> bool:
        return self.ball_radius is not None

    @property
    def ball(self) -> WassersteinBall:
        if not self.has_ball:
            raise ValueError("The problem has no [ball] block")
        return WassersteinBall(self.reference, self.ball_order, self.ball_radius)

    def __eq__(self, other):
        if not isinstance(other, ProblemFile):
            return NotImplemented
        return dump_canonical(self) == dump_canonical(other) and \
            all(_same_distribution(a, b) for a, b in zip(self.marginals, other.marginals))


def _same_distribution(a: Distribution1D, b: Distribution1D) -> bool:
    return (np.array_equal(a.locations, b.locations) and np.array_equal(a.masses, b.masses)
            and np.array_equal(a.density.breakpoints, b.density.breakpoints)
            and np.array_equal(a.density.coefficients, b.density.coefficients))


# =======================
# Parsing
# =======================
class _Line:
    def __init__(self, number, text):
        self.number = number
        self.tokens = [(m.group(0), m.start() + 1) for m in _TOKEN.finditer(text)]

    @property
    def keyword(self) -> str:
        return self.tokens[0][0]

    def error(self, message, index=0):
        column = self.tokens[index][1] if index < len(self.tokens) else None
        return ProblemFileError(message, self.number, column)

    def number_at(self, index, name='value') -> float:
        if index >= len(self.tokens):
            raise self.error(f"Missing {name}", len(self.tokens) - 1)
        text, _ = self.tokens[index]
        try:
            return float(text)
        except ValueError:
            raise self.error(f"Expected a number for {name}, got {text!r}", index) from None

    def numbers_from(self, index, name='value') -> List[float]:
        return [self.number_at(k, name) for k in range(index, len(self.tokens))]

    def int_at(self, index, name) -> int:
        value = self.number_at(index, name)
        if value != int(value):
            raise self.error(f"{name} must be an integer", index)
        return int(value)

    def expect_count(self, count):
        if len(self.tokens) != count:
            index = min(count, len(self.tokens) - 1)
            raise self.error(f"'{self.keyword}' takes {count - 1} arguments, got {len(self.tokens) - 1}", index)


def _split_sections(text: str) -> Tuple[Dict[str, Tuple[int, List[_Line]]], List[str]]:
    sections, order, current = {}, [], None
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split('#', 1)[0]
        if not content.strip():
            continue
        stripped = content.strip()
        if stripped.startswith('['):
            column = content.index('[') + 1
            if not stripped.endswith(']'):
                raise ProblemFileError("Unterminated section header", number, column)
            name = stripped[1:-1].strip()
            if name not in SECTIONS:
                raise ProblemFileError(f"Unknown section [{name}]; expected one of {list(SECTIONS)}",
                                       number, column)
            if name in sections:
                raise ProblemFileError(f"Section [{name}] appears twice", number, column)
            sections[name] = (number, [])
            order.append(name)
            current = name
            continue
        if current is None:
            raise ProblemFileError("Content before the first section header", number,
                                   len(content) - len(content.lstrip()) + 1)
        sections[current][1].append(_Line(number, content))
    return sections, order


def _parse_cost(lines: List[_Line]) -> CostVector:
    pairs = []
    for line in lines:
        if line.keyword != 'q':
            raise line.error(f"Unknown [cost] entry {line.keyword!r}")
        line.expect_count(3)
        qp, qm = line.number_at(1, 'q+'), line.number_at(2, 'q-')
        if qp < 0 or qm < 0 or not (math.isfinite(qp) and math.isfinite(qm)):
            raise line.error("Costs must be finite and nonnegative", 1)
        pairs.append((qp, qm))
    return CostVector(pairs)


def _build_marginal(atoms, segments, line: _Line) -> Distribution1D:
    try:
        return Distribution1D.from_segments(segments, atoms=atoms)
    except ValueError as exc:
        raise line.error(f"Invalid marginal: {exc}") from None


def _parse_distribution(lines: List[_Line]) -> List[Distribution1D]:
    marginals, atoms, segments, last = [], [], [], None
    for line in lines:
        if line.keyword == '---':
            if not atoms and not segments:
                raise line.error("Empty marginal")
            marginals.append(_build_marginal(atoms, segments, last))
            atoms, segments = [], []
            continue
        last = line
        if line.keyword == 'atom':
            line.expect_count(3)
            location, mass = line.number_at(1, 'location'), line.number_at(2, 'mass')
            if not math.isfinite(location):
                raise line.error("Atom locations must be finite", 1)
            if not mass > 0:
                raise line.error("Atom masses must be positive", 2)
            atoms.append((location, mass))
        elif line.keyword == 'segment':
            if len(line.tokens) < 4:
                raise line.error("'segment' needs a, b and at least one coefficient", len(line.tokens) - 1)
            a, b = line.number_at(1, 'a'), line.number_at(2, 'b')
            if not (math.isfinite(a) and math.isfinite(b) and b > a):
                raise line.error("Segment ends must be finite with a < b", 1)
            coefficients = line.numbers_from(3, 'coefficient')
            if len(coefficients) - 1 > get_config().numerics.MAX_DENSITY_DEGREE:
                raise line.error("Density degree exceeds the cap", 3)
            segments.append((a, b, coefficients))
        else:
            raise line.error(f"Unknown [distribution] entry {line.keyword!r}")
    if atoms or segments:
        marginals.append(_build_marginal(atoms, segments, last))
    return marginals


def _parse_ball(lines: List[_Line], header_line: int) -> Tuple[float, float]:
    order, radius = 1.0, None
    for line in lines:
        line.expect_count(2)
        if line.keyword == 'p':
            order = line.number_at(1, 'p')
            if not order >= 1 or not math.isfinite(order):
                raise line.error("Wasserstein order must be a finite number >= 1", 1)
        elif line.keyword == 'epsilon':
            radius = line.number_at(1, 'epsilon')
            if not radius >= 0 or not math.isfinite(radius):
                raise line.error("Radius must be finite and nonnegative", 1)
        else:
            raise line.error(f"Unknown [ball] entry {line.keyword!r}")
    if radius is None:
        raise ProblemFileError("[ball] needs an 'epsilon' line", header_line, 1)
    return order, radius


def _parse_moments(lines: List[_Line], m: int, header_line: int) -> MomentAmbiguitySet:
    specs = [[] for _ in range(m)]
    supports: List[Optional[Tuple[float, float]]] = [None] * m
    for line in lines:
        if line.keyword != 'dim' or len(line.tokens) < 3:
            raise line.error("Moment lines read 'dim <i> <kind> ...'")
        dim = line.int_at(1, 'dimension')
        if not 0 <= dim < m:
            raise line.error(f"Dimension {dim} is outside 0..{m - 1}", 1)
        kind = line.tokens[2][0]
        if kind == 'support':
            line.expect_count(5)
            lo, hi = line.number_at(3, 'L'), line.number_at(4, 'U')
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise line.error("Support needs finite L <= U", 3)
            supports[dim] = (lo, hi)
        elif kind == 'mean':
            line.expect_count(4)
            specs[dim].append(MomentFunctionSpec.mean(line.number_at(3, 'M')))
        elif kind == 'mad':
            line.expect_count(5)
            specs[dim].append(MomentFunctionSpec.mad(line.number_at(3, 'center'), line.number_at(4, 'M')))
        elif kind == 'power':
            line.expect_count(5)
            degree = line.int_at(3, 'degree')
            if degree < 1:
                raise line.error("Power degree must be >= 1", 3)
            specs[dim].append(MomentFunctionSpec.power(degree, line.number_at(4, 'M')))
        elif kind == 'poly':
            if not 5 <= len(line.tokens) <= 8:
                raise line.error("'poly' takes a target and 1 to 4 coefficients", 2)
            specs[dim].append(MomentFunctionSpec.poly(line.numbers_from(4, 'coefficient'),
                                                      line.number_at(3, 'M')))
        else:
            raise line.error(f"Unknown moment kind {kind!r}", 2)
    missing = [i for i, s in enumerate(supports) if s is None]
    if missing:
        raise ProblemFileError(f"[moments] needs a support line for dimensions {missing}", header_line, 1)
    return MomentAmbiguitySet(specs, supports)


def _parse_first_stage(lines: List[_Line], m: int, header_line: int) -> FirstStageProblem:
    costs, boxes = None, []
    for line in lines:
        if line.keyword == 'c':
            if costs is not None:
                raise line.error("Duplicate 'c' line")
            line.expect_count(m + 1)
            costs = line.numbers_from(1, 'c')
            if not all(math.isfinite(c) for c in costs):
                raise line.error("First-stage costs must be finite", 1)
        elif line.keyword == 'box':
            line.expect_count(3)
            lo, hi = line.number_at(1, 'lo'), line.number_at(2, 'hi')
            if lo > hi:
                raise line.error("Box needs lo <= hi", 1)
            boxes.append((lo, hi))
        else:
            raise line.error(f"Unknown [first_stage] entry {line.keyword!r}")
    if costs is None:
        raise ProblemFileError("[first_stage] needs a 'c' line", header_line, 1)
    if boxes and len(boxes) != m:
        raise ProblemFileError(f"[first_stage] has {len(boxes)} box lines for {m} dimensions", header_line, 1)
    if not boxes:
        boxes = [(-math.inf, math.inf)] * m
    return FirstStageProblem(costs, [b[0] for b in boxes], [b[1] for b in boxes])


def parse_problem(text: str, source: str = '<string>') -> ProblemFile:
    try:
        sections, _ = _split_sections(text)
        if 'cost' not in sections:
            raise ProblemFileError("Missing [cost] section", None, None)
        cost_line, cost_lines = sections['cost']
        if not cost_lines:
            raise ProblemFileError("[cost] is empty", cost_line, 1)
        q = _parse_cost(cost_lines)

        if 'ball' in sections and 'moments' in sections:
            raise ProblemFileError("Only one of [ball] and [moments] may appear", sections['moments'][0], 1)

        marginals = []
        if 'distribution' in sections:
            dist_line, dist_lines = sections['distribution']
            marginals = _parse_distribution(dist_lines)
            if len(marginals) != q.m:
                raise ProblemFileError(f"[distribution] has {len(marginals)} marginals for {q.m} cost lines",
                                       dist_line, 1)
        elif 'moments' not in sections:
            raise ProblemFileError("Missing [distribution] section", None, None)

        problem = ProblemFile(q, marginals)
        if 'ball' in sections:
            if not marginals:
                raise ProblemFileError("[ball] needs a [distribution] block", sections['ball'][0], 1)
            header, lines = sections['ball']
            problem.ball_order, problem.ball_radius = _parse_ball(lines, header)
        if 'moments' in sections:
            header, lines = sections['moments']
            problem.moments = _parse_moments(lines, q.m, header)
        if 'first_stage' in sections:
            header, lines = sections['first_stage']
            problem.first_stage = _parse_first_stage(lines, q.m, header)
        return problem
    except ProblemFileError as exc:
        if exc.source != source:
            raise ProblemFileError(exc.message, exc.line, exc.column, source) from None
        raise


def load_problem(path) -> ProblemFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"Cannot read problem file: {exc.strerror}", source=str(path)) from None
    return parse_problem(text, source=str(path))


# =======================
# Canonical writer
# =======================
def _f(value: float) -> str:
    return get_config().experiment.FLOAT_FORMAT % value


def _dump_marginal(d: Distribution1D) -> List[str]:
    lines = [f"atom {_f(loc)} {_f(mass)}" for loc, mass in zip(d.locations, d.masses)]
    density = d.density
    breaks = density.breakpoints
    for j in range(density.n_segments):
        if density.is_zero_segment(j):
            continue
        a, b = breaks[j], breaks[j + 1]
        coefficients = ' '.join(_f(c) for c in density.coefficients[j])
        lines.append(f"segment {_f(a)} {_f(b)} {coefficients}")
    return lines


def _dump_spec(dim: int, spec: MomentFunctionSpec) -> str:
    if spec.kind == 'power' and spec.degree == 1:
        return f"dim {dim} mean {_f(spec.target)}"
    if spec.kind == 'power':
        return f"dim {dim} power {spec.degree} {_f(spec.target)}"
    if spec.kind == 'mad':
        return f"dim {dim} mad {_f(spec.center)} {_f(spec.target)}"
    if spec.kind == 'poly':
        return f"dim {dim} poly {_f(spec.target)} " + ' '.join(_f(c) for c in spec.coefficients)
    raise ValueError("Piecewise moment functions have no problem-file form")


def dump_canonical(problem: ProblemFile) -> str:
    out = ['[cost]'] + [f"q {_f(qp)} {_f(qm)}" for qp, qm in problem.q.pairs()]
    if problem.marginals:
        out.append('[distribution]')
        for k, d in enumerate(problem.marginals):
            if k:
                out.append('---')
            out.extend(_dump_marginal(d))
    if problem.has_ball:
        out += ['[ball]', f"p {_f(problem.ball_order)}", f"epsilon {_f(problem.ball_radius)}"]
    if problem.moments is not None:
        out.append('[moments]')
        for dim, (specs, (lo, hi)) in enumerate(zip(problem.moments.specs, problem.moments.supports)):
            out.append(f"dim {dim} support {_f(lo)} {_f(hi)}")
            out.extend(_dump_spec(dim, spec) for spec in specs)
    if problem.first_stage is not None:
        fs = problem.first_stage
        out += ['[first_stage]', 'c ' + ' '.join(_f(c) for c in fs.c)]
        out += [f"box {_f(lo)} {_f(hi)}" for lo, hi in zip(fs.lower, fs.upper)]
    return '\n'.join(out) + '\n'


def write_problem(problem: ProblemFile, path) -> None:
    Path(path).write_text(dump_canonical(problem))
