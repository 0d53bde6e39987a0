"""Cross-checks the shipped JSON Schema against the CLI's built-in checker.

Each mutated document must be rejected by both (exit 3) or accepted by both.
"""

import copy
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def set_path(doc, path, value):
    *head, last = path
    node = doc
    for k in head:
        node = node[k]
    node[last] = value


def del_path(doc, path):
    *head, last = path
    node = doc
    for k in head:
        node = node[k]
    del node[last]


def mutations():
    dist = ("assumptions", 0, "distribution")
    yield "unchanged", lambda d: None
    yield "no run block", lambda d: del_path(d, ("run",))
    yield "no target", lambda d: del_path(d, ("forecasts", 0, "target"))
    yield "numeric formula", lambda d: set_path(d, ("cells", 4, "formula"), 550)
    yield "relabelled forecast", lambda d: set_path(d, ("forecasts", 0, "label"), "Value")
    yield "other seed", lambda d: set_path(d, ("run", "seed"), 7)
    yield "discrete uniform", lambda d: set_path(d, dist, {"type": "discrete_uniform", "lo": 800, "hi": 1200})
    yield "single-point custom", lambda d: set_path(
        d, dist, {"type": "custom", "points": [{"value": 1000, "probability": 1}]})
    yield "normal", lambda d: set_path(d, dist, {"type": "normal", "mean": 1000, "sd": 50})

    yield "!no name", lambda d: del_path(d, ("name",))
    yield "!no cells", lambda d: del_path(d, ("cells",))
    yield "!unknown top-level key", lambda d: set_path(d, ("extra",), 1)
    yield "!boolean formula", lambda d: set_path(d, ("cells", 0, "formula"), True)
    yield "!numeric label", lambda d: set_path(d, ("cells", 0, "label"), 5)
    yield "!cells not an array", lambda d: set_path(d, ("cells",), {})
    yield "!unknown distribution", lambda d: set_path(d, dist, {"type": "weibull", "k": 2})
    yield "!missing parameter", lambda d: del_path(d, dist + ("mode",))
    yield "!extra parameter", lambda d: set_path(d, dist + ("sd",), 1)
    yield "!fractional discrete bound", lambda d: set_path(
        d, dist, {"type": "discrete_uniform", "lo": 800.5, "hi": 1200})
    yield "!empty custom", lambda d: set_path(d, dist, {"type": "custom", "points": []})
    yield "!custom point without probability", lambda d: set_path(d, dist, {"type": "custom", "points": [{"value": 1}]})
    yield "!string rho", lambda d: set_path(d, ("correlations", 0, "rho"), "0.2")
    yield "!string target", lambda d: set_path(d, ("forecasts", 0, "target", "min"), "x")
    yield "!null limit", lambda d: set_path(d, ("limits", 0, "min"), None)
    yield "!worded sign", lambda d: set_path(d, ("expectations", 0, "sign"), "positive")
    yield "!interval without max", lambda d: del_path(d, ("expected_intervals", 0, "max"))
    yield "!zero trials", lambda d: set_path(d, ("run", "trials"), 0)
    yield "!negative seed", lambda d: set_path(d, ("run", "seed"), -1)
    yield "!run as array", lambda d: set_path(d, ("run",), [])


def main():
    cli, examples, schema_path = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3])
    schema = json.loads(schema_path.read_text())
    validator = jsonschema.Draft202012Validator(schema)
    base = json.loads((examples / "project-npv.json").read_text())
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        for name, mutate in mutations():
            doc = copy.deepcopy(base)
            mutate(doc)
            path = Path(tmp) / "doc.json"
            path.write_text(json.dumps(doc))
            schema_ok = validator.is_valid(doc)
            code = subprocess.run([cli, "validate", str(path)], capture_output=True).returncode
            expect_ok = not name.startswith("!")
            agree = schema_ok == expect_ok and (code == 0) == expect_ok and (code == 3) == (not expect_ok)
            print(f"{'ok ' if agree else 'BAD'} {name}: schema {'valid' if schema_ok else 'invalid'}, exit {code}")
            failures += not agree
        for example in sorted(examples.glob("*.json")):
            if not validator.is_valid(json.loads(example.read_text())):
                print(f"BAD {example.name} fails the schema")
                failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
