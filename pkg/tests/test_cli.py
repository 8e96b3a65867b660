import json
import subprocess
import sys

import numpy as np
import pytest

from tanlift import expr as ex
from tanlift.cli import SELECTORS, compute_object, main
from tanlift.dsl import parse_expression
from helpers import CORPUS, workspace

FLAT = str(CORPUS / "flat.lg")
SPHERE = str(CORPUS / "sphere.lg")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_sphere(capsys):
    code, out, _ = run(capsys, "check", SPHERE, "--seed", "42")
    assert code == 0
    for anchor in ("Eq8", "Eq10", "Eq15", "Cond1", "Prop2", "Prop3"):
        assert anchor in out


def test_compute_h_json(capsys):
    code, out, _ = run(capsys, "compute", "H", FLAT, "--manifold", "flat", "--field", "quad", "--format", "json")
    assert code == 0
    d = json.loads(out)
    h000 = parse_expression(d["objects"]["H"][0][0][0])
    assert ex.simplify(h000).is_value(2.0)


def test_missing_file(capsys):
    code, _, err = run(capsys, "check", "missing.lg")
    assert code == 2 and "file not found" in err


def test_usage_and_parse_errors(capsys, tmp_path):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "compute", "H", FLAT)[0] == 2  # needs --field
    assert run(capsys, "compute", "H", FLAT, "--field", "nope")[0] == 2
    assert run(capsys, "check", FLAT, "--checks", "Bogus")[0] == 2
    bad = tmp_path / "bad.lg"
    bad.write_text("manifold m { dim 1; coords x; metric { g[0][0] = sin(; } }")
    code, _, err = run(capsys, "check", str(bad))
    assert code == 2 and "line 1" in err


def test_check_failures_exit_one(capsys):
    code, out, _ = run(capsys, "check", FLAT, "--inject-fault", "sff.second_derivative")
    assert code == 1 and "FAIL" in out


def test_text_and_json_agree(capsys):
    _, text, _ = run(capsys, "check", SPHERE, "--seed", "3")
    _, js, _ = run(capsys, "check", SPHERE, "--seed", "3", "--format", "json")
    checks = json.loads(js)["checks"]
    lines = [l for l in text.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) == len(checks)
    for line, c in zip(lines, checks):
        assert line.startswith(c["status"].upper()) and c["anchor"] in line


def test_explain(capsys):
    code, out, _ = run(capsys, "explain", SPHERE, "--field", "rot")
    assert code == 0 and "asserts:" in out and "residual:" in out


def _strings(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            yield from _strings(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _strings(v)
    else:
        yield obj


def _pairs(obj, raw):
    if isinstance(obj, dict):
        for k in obj:
            yield from _pairs(obj[k], raw[k])
    elif isinstance(obj, list):
        for o, r in zip(obj, raw):
            yield from _pairs(o, r)
    else:
        yield obj, raw


@pytest.mark.parametrize("stem", ["flat", "polar", "sphere", "hyperbolic", "explicit"])
def test_json_round_trip(capsys, stem):
    ws = workspace(stem)
    (mname, decl), = ws.manifolds.items()
    dom = dict(decl.domain)
    dom.update({"d" + c: (-2.0, 2.0) for c in decl.coords})
    for sel in SELECTORS:
        if sel == "lift-metric" and decl.metric is None:
            continue
        code, out, _ = run(capsys, "compute", sel, str(CORPUS / f"{stem}.lg"), "--field", "poly", "--format", "json")
        assert code == 0, sel
        emitted = json.loads(out)["objects"][sel]
        raw = compute_object(decl, sel, "poly")
        raw = {k: np.asarray(a).tolist() for k, a in raw.items()} if isinstance(raw, dict) else np.asarray(raw).tolist()
        pairs = list(_pairs(emitted, raw))
        assert pairs
        for s, e in pairs:
            assert ex.equivalent(parse_expression(s), e, dom), (sel, s)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "tanlift", "compute", "christoffel", SPHERE],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "christoffel[0][1][1]" in r.stdout
