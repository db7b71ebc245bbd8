"""
Output side of the lab: JSON / CSV writers (atomic), schema validation of
check reports, and the HTML verification dashboard.
"""
import hashlib
import json
import math
import os
import tempfile

import jsonschema
import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from config import SCHEMA_PATH, TEMPLATE_DIR

ESTIMATE_COLUMNS = ['p', 'n', 'estimate', 'ci_low', 'ci_high', 'bound']


def inputs_digest(*parts):
    """Short sha256 of the inputs of a check, stable across runs."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part, dtype=np.float64).tobytes())
        elif hasattr(part, 'members'):
            h.update(np.asarray(part.members, dtype=np.int64).tobytes())
        else:
            h.update(repr(to_jsonable(part)).encode())
        h.update(b'|')
    return h.hexdigest()[:16]


def to_jsonable(obj):
    """numpy scalars/arrays to plain Python; non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if hasattr(obj, 'to_dict'):
        return to_jsonable(obj.to_dict())
    return obj


def status_of(report):
    if report.get('vacuous'):
        return 'vacuous'
    return 'pass' if report.get('pass') else 'fail'


_schema = None


def load_schema():
    global _schema
    if _schema is None:
        with open(SCHEMA_PATH) as f:
            _schema = json.load(f)
    return _schema


def validate_report(report):
    jsonschema.validate(to_jsonable(report), load_schema())


def format_json(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def format_csv(df):
    return df.to_csv(index=False, lineterminator="\n")


def write_atomic(path, text):
    """Write via a temp file in the target directory and rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.perclab-', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def reports_frame(reports):
    """One row per check report, nested fields dropped."""
    rows = []
    for r in reports:
        r = to_jsonable(r)
        rows.append({k: v for k, v in r.items() if not isinstance(v, (dict, list))})
    return pd.DataFrame(rows)


def estimates_table(rows):
    """p-sweep style table with the fixed column order p, n, estimate, ci_low, ci_high, bound."""
    df = pd.DataFrame(to_jsonable(list(rows)))
    for col in ESTIMATE_COLUMNS:
        if col not in df.columns:
            df[col] = None
    return df[ESTIMATE_COLUMNS + [c for c in df.columns if c not in ESTIMATE_COLUMNS]]


def _fmt(value):
    if value is None:
        return "N/A"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render_dashboard(reports, path, title="perclab verification", seed=None):
    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), autoescape=True)
    template = env.get_template('report.html')

    rows = []
    for r in reports:
        r = to_jsonable(r)
        rows.append({
            'check': r.get('check', 'N/A'),
            'status': status_of(r),
            'lhs': _fmt(r.get('lhs')),
            'rhs': _fmt(r.get('rhs')),
            'slack': _fmt(r.get('slack')),
            'digest': r.get('inputs_digest', ''),
            'notes': ", ".join(r.get('flags', [])),
        })
    counts = {s: sum(row['status'] == s for row in rows) for s in ('pass', 'vacuous', 'fail')}
    html_content = template.render(title=title, reports=rows, counts=counts, seed=seed)
    return write_atomic(path, html_content)
