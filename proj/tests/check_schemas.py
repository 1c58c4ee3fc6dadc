"""Runs every ces-market report through its checked-in JSON schema."""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

cli, root = sys.argv[1], Path(sys.argv[2])
schemas = root / "docs" / "schemas"
ex = root / "docs" / "examples"


def schema(name):
    s = json.loads((schemas / name).read_text())
    jsonschema.Draft7Validator.check_schema(s)
    return s


def run(*args, expect=0):
    p = subprocess.run([cli, *map(str, args)], capture_output=True, text=True, timeout=120)
    if p.returncode != expect:
        sys.exit(f"{args}: exit {p.returncode}, wanted {expect}\n{p.stderr}")
    return json.loads(p.stdout) if p.stdout else None


failures = 0


def check(report, name, label):
    global failures
    try:
        jsonschema.validate(report, schema(name))
        print(f"ok   {label}")
    except jsonschema.ValidationError as e:
        failures += 1
        print(f"FAIL {label}: {e.message}")


for f in ["water.json", "water_utilitarian.json", "mixed.json", "leontief.json", "power.json",
          "bad_rho.json"]:
    check(json.loads((ex / f).read_text()), "instance.schema.json", f"instance {f}")

with tempfile.TemporaryDirectory() as tmp:
    for f in ["water.json", "mixed.json", "leontief.json", "power.json"]:
        sol = Path(tmp) / f"{f}.sol"
        run("solve", ex / f, "--out", sol)
        report = json.loads(sol.read_text())
        check(report, "solve.schema.json", f"solve {f}")
        check(report, "solution.schema.json", f"solve {f} as solution")
        check(run("verify", ex / f, sol), "verify.schema.json", f"verify {f}")
        if f != "leontief.json":
            check(run("fisher", ex / f, sol), "fisher.schema.json", f"fisher {f}")
    check(run("verify", ex / "water.json", ex / "perturbed.json", expect=1),
          "verify.schema.json", "verify perturbed")
    check(json.loads((ex / "perturbed.json").read_text()), "solution.schema.json",
          "perturbed solution")

check(run("truthful", ex / "water.json", "--scan"), "truthful.schema.json", "truthful --scan")
check(run("truthful", ex / "power.json", "--agent", 1), "truthful.schema.json", "truthful --agent")
check(run("sybil-check", ex / "water.json", "--kappa", 100), "sybil-check.schema.json",
      "sybil-check stable")
check(run("sybil-check", ex / "water.json", expect=1), "sybil-check.schema.json",
      "sybil-check unbounded")
for d in ["gap", "mixed-degree", "neg-rho", "nash", "first-welfare"]:
    check(run("demo", d), "demo.schema.json", f"demo {d}")

sys.exit(1 if failures else 0)
