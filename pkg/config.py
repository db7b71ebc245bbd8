import os
from dataclasses import dataclass, field

# Configuration
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
TEMPLATE_DIR = os.path.join(BASE_DIR, 'templates')
SCHEMA_PATH = os.path.join(BASE_DIR, 'schemas', 'report.schema.json')

MAX_VERTICES = int(os.environ.get('PERCLAB_MAX_VERTICES', 2_000_000))
EXHAUSTIVE_MAX_VERTICES = 14
LAMPLIGHTER_MAX_LENGTH = 20
TORUS_MAX_DIMS = 4

POWER_TOL = 1e-10
POWER_MAX_ITER = 100_000
REVERSIBILITY_RTOL = 1e-10
THEOREM_SLACK = 1e-9
MTP_TOL = 1e-10
DEFAULT_CONFIDENCE = 0.99

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

# gamma grid for the heat-kernel fit, 0.01 .. 1.00
HK_GAMMA_GRID = [round(i / 100, 2) for i in range(1, 101)]

BALL_FAMILY_MAX_CONNECTED = 8

# fewer samples than this gives degenerate confidence intervals
MIN_CHECK_SAMPLES = 20
# all-pairs / dense-matrix checks (mass transport) stay below this size
DENSE_MAX_VERTICES = 4096


class PerclabError(Exception):
    exit_code = 4
    kind = 'runtime'


class SpecError(PerclabError):
    exit_code = 2
    kind = 'parse'


class PreconditionError(PerclabError, ValueError):
    exit_code = 3
    kind = 'precondition'


class ValidityError(PreconditionError):
    """Result would be contaminated by the boundary of the finite stand-in."""
    kind = 'validity'


class ConvergenceError(PerclabError, RuntimeError):
    kind = 'convergence'

    def __init__(self, message, bracket=None, iterations=None):
        super().__init__(message)
        self.bracket = bracket
        self.iterations = iterations


def max_vertices():
    # re-read so tests and the CLI can change the cap at runtime
    return int(os.environ.get('PERCLAB_MAX_VERTICES', MAX_VERTICES))


def parse_value(text):
    """Parse one config value: bool, int, float, comma list, or bare string."""
    text = text.strip()
    if ',' in text:
        return [parse_value(part) for part in text.split(',') if part.strip()]
    lowered = text.lower()
    if lowered in ('true', 'yes'):
        return True
    if lowered in ('false', 'no'):
        return False
    try:
        if lowered.startswith('0x'):
            return int(text, 16)
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_flat_config(text):
    """
    Parses the flat `section.key = value` format into {section: {key: value}}.
    Nesting beyond one dotted level is rejected.
    """
    sections = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise SpecError(f"line {lineno}: expected 'section.key = value', got {raw!r}")
        name, value = line.split('=', 1)
        name = name.strip()
        parts = name.split('.')
        if len(parts) != 2 or not all(parts):
            raise SpecError(f"line {lineno}: key {name!r} must be exactly 'section.key'")
        section, key = parts
        sections.setdefault(section, {})[key] = parse_value(value)
    return sections


def load_flat_config(path):
    try:
        with open(path) as f:
            return parse_flat_config(f.read())
    except OSError as e:
        raise SpecError(f"cannot read config {path}: {e}") from e


@dataclass
class ExperimentSpec:
    graph: dict
    task: str
    params: dict = field(default_factory=dict)
    n_samples: int = 10_000
    master_seed: int = None
    replicas: int = 1
    confidence: float = DEFAULT_CONFIDENCE
    workers: int = None
    output_format: str = 'csv'
    output_path: str = None

    @classmethod
    def from_sections(cls, sections):
        graph = dict(sections.get('graph', {}))
        if 'family' not in graph:
            raise SpecError("missing graph.family")
        task_section = dict(sections.get('task', {}))
        if 'name' not in task_section:
            raise SpecError("missing task.name")
        name = task_section.pop('name')
        sampling = sections.get('sampling', {})
        if 'master_seed' not in sampling:
            # never auto-seed from the clock
            raise SpecError("missing sampling.master_seed")
        output = sections.get('output', {})
        return cls(
            graph=graph,
            task=str(name),
            params=task_section,
            n_samples=int(sampling.get('n_samples', 10_000)),
            master_seed=int(sampling['master_seed']) & MASK64,
            replicas=int(sampling.get('replicas', 1)),
            confidence=float(sampling.get('confidence', DEFAULT_CONFIDENCE)),
            workers=sampling.get('workers'),
            output_format=str(output.get('format', 'csv')),
            output_path=output.get('path'),
        )
