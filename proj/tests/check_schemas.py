#!/usr/bin/env python3
"""Run the CLI end to end and validate every JSON document against the shipped schemas.

usage: check_schemas.py <dtrkit binary> <schemas dir> <work dir>
"""

import csv
import json
import pathlib
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource


def main():
    cli, schema_dir, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    work.mkdir(parents=True, exist_ok=True)

    schemas = {}
    for name in ("result", "policy", "run_config"):
        s = json.loads((schema_dir / f"{name}.schema.json").read_text())
        jsonschema.Draft202012Validator.check_schema(s)
        schemas[name] = s
    registry = Registry().with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values())
    validators = {k: jsonschema.Draft202012Validator(s, registry=registry) for k, s in schemas.items()}
    failures = []

    def validate(kind, doc, label):
        errors = sorted(validators[kind].iter_errors(doc), key=lambda e: list(e.path))
        for e in errors:
            failures.append(f"{label}: {'/'.join(map(str, e.path))}: {e.message}")
        return not errors

    def run(*args, expect=0):
        p = subprocess.run([cli, *args], capture_output=True, text=True)
        if p.returncode != expect:
            failures.append(f"{' '.join(args)}: exit {p.returncode} (expected {expect}): {p.stderr.strip()}")
        return p

    def write_config(name, cfg):
        path = work / name
        path.write_text(json.dumps(cfg, indent=2))
        validate("run_config", cfg, name)
        return str(path)

    run("simulate", "--model", "two", "--n", "400", "--seed", "5", "--out", str(work / "two.csv"))
    run("simulate", "--model", "single", "--n", "400", "--seed", "6", "--out", str(work / "single.csv"))

    # Add cluster and site columns to the single-stage data.
    with open(work / "single.csv", newline="") as f:
        rows = list(csv.reader(f))
    rows[0] += ["id", "clinic", "site"]
    for i, row in enumerate(rows[1:], start=1):
        row += [str(i), f"c{i % 40}", ["north", "south", "east"][i % 3]]
    with open(work / "single_sites.csv", "w", newline="") as f:
        csv.writer(f).writerows(rows)

    two_data = {"layout": "wide", "path": "two.csv", "action": ["A_1", "A_2"],
                "covariates": {"L": ["L_1", "L_2"], "C": ["C_1", "C_2"]},
                "utility": ["U_1", "U_2", "U_3"]}
    g2 = [{"family": "glm", "formula": "~L+C", "history": "state"}]
    q2 = [{"family": "glm", "formula": "~A*.", "history": "full"}]

    for estimator in ("dr", "ipw", "or"):
        cfg = write_config(f"eval_{estimator}.json", {
            "data": two_data, "estimator": estimator, "policy": {"builtin": "optimal_two"},
            "g_models": g2, "q_models": q2, "folds": 2, "seed": 1})
        p = run("evaluate", "--config", cfg)
        if p.returncode == 0:
            validate("result", json.loads(p.stdout), f"evaluate {estimator}")

    single_data = {"path": "single_sites.csv", "action": ["A"], "covariates": ["Z", "L"],
                   "utility": ["U"], "baseline": ["B", "site"], "id": "id"}
    cfg = write_config("eval_cluster.json", {
        "data": single_data, "policy": {"builtin": "optimal_single"},
        "g_models": {"family": "glm", "formula": "~Z+L+B"}, "q_models": {"formula": "~A*(Z+L)"},
        "cluster": "clinic", "conditional": "site"})
    p = run("evaluate", "--config", cfg)
    if p.returncode == 0:
        doc = json.loads(p.stdout)
        validate("result", doc, "evaluate cluster/conditional")
        if len(doc.get("conditional", [])) != 3:
            failures.append("conditional output should have three levels")

    for kind in ("ql", "drql", "blip", "ptl", "wcl"):
        learner = {"type": kind, "designs": [{"formula": "~L+C", "history": "state"}], "depth": 2, "alpha": 0.05}
        cfg = write_config(f"learn_{kind}.json", {"data": two_data, "learner": learner,
                                                  "g_models": g2, "q_models": q2, "folds": 2})
        policy_path = work / f"policy_{kind}.json"
        value_path = work / f"value_{kind}.json"
        p = run("learn", "--config", cfg, "--out", str(policy_path), "--value-out", str(value_path))
        if p.returncode != 0:
            continue
        policy = json.loads(policy_path.read_text())
        validate("policy", policy, f"policy {kind}")
        validate("result", json.loads(value_path.read_text()), f"learner value {kind}")
        # The written policy is accepted back as a run-config policy and by apply.
        apply_cfg = write_config(f"apply_{kind}.json", {"data": two_data, "policy": {"file": policy_path.name}})
        run("apply", "--config", apply_cfg, "--out", str(work / f"actions_{kind}.csv"))
        run("apply", "--config", apply_cfg, "--policy", str(policy_path), "--out", str(work / f"actions2_{kind}.csv"))
        if (work / f"actions_{kind}.csv").read_text() != (work / f"actions2_{kind}.csv").read_text():
            failures.append(f"apply {kind}: --policy and config policy disagree")

    # A config the schema rejects is also rejected by the CLI as a configuration error.
    bad = {"data": two_data, "policy": "1", "fold": 2}
    if validators["run_config"].is_valid(bad):
        failures.append("schema accepted an unknown top-level key")
    path = work / "bad.json"
    path.write_text(json.dumps(bad))
    run("evaluate", "--config", str(path), expect=2)

    for f in failures:
        print("FAIL", f)
    print(f"{len(failures)} schema failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
