import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dualflat.cli import COMMANDS, dumps, main, result_validator, run, to_csv, validate
from dualflat.errors import ValidationError

BERNOULLI2 = {"kind": "bernoulli_product", "dim": 2}
EXP_METRIC = {"kind": "metric", "fundamental": [["exp(x0)"]]}

JOBS = {
    "divergence": {"manifold": {"kind": "euclidean", "dim": 2}, "arguments": {"p": [0, 0], "q": [3, 4]}},
    "legendre": {"manifold": BERNOULLI2, "arguments": {"p": [0.5, -1.0]}},
    "metric": {"manifold": BERNOULLI2, "arguments": {"p": [0.0, 1.0]}},
    "geodesic": {"manifold": EXP_METRIC, "arguments": {"p": [0], "v": [2], "t_end": 1, "step": 1e-3}},
    "distance": {"manifold": EXP_METRIC, "arguments": {"p": [0], "q": [2]}},
    "project": {
        "manifold": BERNOULLI2,
        "arguments": {
            "p": [math.log(0.3 / 0.7), math.log(0.7 / 0.3)],
            "submanifold": {"chart": "dual", "offset": [0, 0], "basis": [[1, 1]], "lower": [0], "upper": [1]},
        },
    },
    "check": {"manifold": BERNOULLI2, "arguments": {"samples": 3, "suites": ["involution", "pythagoras"]}},
}


def job_text(command, **changes):
    doc = {"command": command, **json.loads(json.dumps(JOBS[command]))}
    for key, value in changes.items():
        doc[key] = value
    return json.dumps(doc)


def run_text(text):
    return run(validate(text))


def errors_of(text, **overrides):
    with pytest.raises(ValidationError) as info:
        validate(text, overrides or None)
    return info.value.errors


class TestExamples:
    def test_euclidean_divergence(self):
        status, out = run_text(job_text("divergence"))
        assert status == 0
        assert json.loads(out) == {"value": 12.5, "dual_value": 12.5, "mixed_value": 12.5}

    def test_exponential_geodesic_polyline(self):
        job = validate(job_text("geodesic", output={"format": "csv"}))
        status, out = run(job)
        assert status == 0
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0] == ["t", "xi0", "kinetic"]
        t, xi, kinetic = map(float, rows[-1])
        assert t == 1.0
        assert xi == pytest.approx(2 * math.log(2), abs=1e-6)
        assert kinetic == pytest.approx(4.0, abs=1e-6)

    def test_check_bernoulli_all_pass(self):
        status, out = run_text(json.dumps({"command": "check", "manifold": BERNOULLI2}))
        doc = json.loads(out)
        assert status == 0 and doc["passed"]
        assert max(s["max_residual"] for s in doc["suites"]) < 1e-6
        assert [s["name"] for s in doc["suites"]] == sorted(s["name"] for s in doc["suites"])

    def test_project(self):
        doc = json.loads(run_text(job_text("project"))[1])
        np.testing.assert_allclose(doc["projected_point"], [0.0, 0.0], atol=1e-10)
        assert abs(doc["pythagoras_residual"] - doc["orthogonality_defect"]) <= 1e-9
        assert abs(doc["pythagoras_residual"]) <= 1e-8

    def test_distance(self):
        doc = json.loads(run_text(job_text("distance"))[1])
        assert doc["reachable"]
        assert doc["distance"] == pytest.approx(2 * (math.e - 1), abs=1e-6)

    def test_custom_potential(self):
        manifold = {"kind": "custom", "dim": 1, "potential": "exp(x0)"}
        doc = json.loads(run_text(job_text("legendre", manifold=manifold, arguments={"p": [0.0]}))[1])
        assert doc["dual_point"] == [1.0]
        assert doc["dual_value"] == pytest.approx(-1.0, abs=1e-12)

    def test_custom_domain(self):
        manifold = {"kind": "custom", "dim": 1, "potential": "-log(x0)", "domain": ["x0"], "reference": [1.0]}
        doc = json.loads(run_text(job_text("legendre", manifold=manifold, arguments={"p": [2.0]}))[1])
        assert doc["dual_point"] == [-0.5]
        errs = errors_of(job_text("legendre", manifold=manifold, arguments={"p": [-2.0]}))
        assert errs[0][0] == "/arguments/p"


class TestValidate:
    def test_well_formed(self):
        job = validate(job_text("divergence"))
        assert job.command == "divergence" and job.dim == 2

    def test_dimension_mismatch(self):
        errs = errors_of(job_text("divergence", arguments={"p": [0, 0, 1], "q": [3, 4]}))
        assert [e[0] for e in errs] == ["/arguments/p"]

    def test_unknown_command(self):
        errs = errors_of(json.dumps({"command": "frobnicate", "manifold": BERNOULLI2}))
        assert errs[0][0] == "/command"
        assert all(c in errs[0][1] for c in COMMANDS)

    def test_errors_are_aggregated(self):
        doc = {"command": "divergence", "manifold": {"kind": "gaussian_fixed_variance", "variance": -1}, "arguments": {"p": "x"}}
        pointers = {e[0] for e in errors_of(json.dumps(doc))}
        assert {"/manifold/variance", "/arguments/p"} <= pointers

    def test_missing_arguments(self):
        errs = errors_of(json.dumps({"command": "divergence", "manifold": BERNOULLI2, "arguments": {"p": [0, 0]}}))
        assert errs == [("/arguments", "command 'divergence' requires 'q'")]

    def test_invalid_json(self):
        assert errors_of(b"{not json")[0][0] == ""

    def test_bad_expression(self):
        manifold = {"kind": "custom", "dim": 1, "potential": "exp(x0"}
        assert errors_of(job_text("legendre", manifold=manifold, arguments={"p": [0]}))[0][0] == "/manifold/potential"

    def test_unknown_symbol(self):
        manifold = {"kind": "custom", "dim": 2, "potential": "x0**2 + y**2"}
        errs = errors_of(job_text("legendre", manifold=manifold, arguments={"p": [0, 0]}))
        assert errs[0][0] == "/manifold/potential" and "'y'" in errs[0][1]

    def test_metric_row_length(self):
        manifold = {"kind": "metric", "fundamental": [["1", "0"], ["0"]]}
        assert errors_of(job_text("metric", manifold=manifold, arguments={"p": [0, 0]}))[0][0] == "/manifold/fundamental/1"

    def test_generator_commands_need_generator(self):
        errs = errors_of(job_text("divergence", manifold=EXP_METRIC, arguments={"p": [0], "q": [1]}))
        assert errs[0][0] == "/manifold/kind"

    def test_pseudo_distance(self):
        manifold = {"kind": "metric", "fundamental": [["1", "0"], ["0", "-1"]], "signature": "pseudo"}
        errs = errors_of(job_text("distance", manifold=manifold, arguments={"p": [0, 0], "q": [1, 0]}))
        assert errs[0][0] == "/manifold/signature"

    def test_csv_only_for_polylines(self):
        errs = errors_of(job_text("divergence", output={"format": "csv"}))
        assert errs[0][0] == "/output/format"

    def test_unknown_suite(self):
        errs = errors_of(job_text("check", arguments={"suites": ["involution", "astrology"]}))
        assert errs[0][0] == "/arguments/suites/1"

    def test_submanifold_shapes(self):
        args = json.loads(job_text("project"))["arguments"]
        args["submanifold"]["basis"] = [[1, 1, 1]]
        errs = errors_of(job_text("project", arguments=args))
        assert errs[0][0] == "/arguments/submanifold/basis/0"

    def test_dependent_basis(self):
        args = json.loads(job_text("project"))["arguments"]
        args["submanifold"] = {"chart": "primal", "offset": [0, 0], "basis": [[1, 1], [2, 2]]}
        assert errors_of(job_text("project", arguments=args))[0][0] == "/arguments/submanifold"

    def test_command_conflict(self):
        assert errors_of(job_text("metric"), command="legendre")[0][0] == "/command"

    def test_overrides_are_validated(self):
        errs = errors_of(job_text("divergence"), arguments={"p": [1.0]})
        assert errs[0][0] == "/arguments/p"


class TestOutput:
    @pytest.mark.parametrize("command", COMMANDS)
    def test_round_trip_schema(self, command):
        status, out = run_text(job_text(command))
        assert status == 0
        result_validator(command).validate(json.loads(out))

    @pytest.mark.parametrize("command", ["divergence", "project", "metric", "legendre"])
    def test_deterministic(self, command):
        assert run_text(job_text(command))[1] == run_text(job_text(command))[1]

    def test_seventeen_digits(self):
        text = dumps({"a": 0.1, "b": [1.0, float("inf")], "c": True, "d": None})
        assert '"a": 0.10000000000000001' in text
        assert json.loads(text) == {"a": 0.1, "b": [1, None], "c": True, "d": None}

    def test_csv_round_trips_exactly(self):
        values = np.array([[0.1, 1 / 3, 2.0 ** -40]])
        parsed = [float(v) for v in to_csv(["a", "b", "c"], values).splitlines()[1].split(",")]
        assert parsed == values[0].tolist()

    def test_unreachable_distance(self):
        manifold = {"kind": "metric", "fundamental": [["1", "0"], ["0", "1"]], "domain": ["x0**2 + x1**2 - 1"]}
        doc = json.loads(run_text(job_text("distance", manifold=manifold, arguments={"p": [-2, 0], "q": [2, 0]}))[1])
        assert doc == {"distance": None, "reachable": False, "initial_velocity": None}
        result_validator("distance").validate(doc)

    def test_numerical_failure(self):
        args = {
            "p": [6.0, 0.0],
            "submanifold": {"chart": "dual", "offset": [0.5, 0.5], "basis": [[1, 0]], "lower": [-0.4], "upper": [0.4]},
        }
        status, out = run_text(job_text("project", arguments=args))
        doc = json.loads(out)
        assert status == 3
        assert doc["errors"][0]["kind"] == "ProjectionError"
        result_validator("error").validate(doc)


class TestMain:
    def write(self, tmp_path, command, **changes):
        path = tmp_path / "job.json"
        path.write_text(job_text(command, **changes))
        return str(path)

    def test_success_to_file(self, tmp_path):
        out = tmp_path / "result.json"
        assert main(["divergence", "--spec", self.write(tmp_path, "divergence"), "--out", str(out)]) == 0
        assert json.loads(out.read_text())["value"] == 12.5

    def test_inline_points(self, tmp_path, capsys):
        assert main(["divergence", "--spec", self.write(tmp_path, "divergence"), "--p", "3,4", "--q", "0,0"]) == 0
        assert json.loads(capsys.readouterr().out)["value"] == 12.5

    def test_bad_inline_point(self, tmp_path, capsys):
        assert main(["divergence", "--spec", self.write(tmp_path, "divergence"), "--p", "3,four"]) == 2
        assert json.loads(capsys.readouterr().err)["errors"][0]["path"] == "/arguments/p"

    def test_validation_exit(self, tmp_path, capsys):
        spec = self.write(tmp_path, "divergence", arguments={"p": [1], "q": [3, 4]})
        assert main(["divergence", "--spec", spec]) == 2
        assert json.loads(capsys.readouterr().err)["errors"][0]["path"] == "/arguments/p"

    def test_unknown_subcommand(self, tmp_path, capsys):
        assert main(["frobnicate", "--spec", self.write(tmp_path, "divergence")]) == 2
        assert "allowed commands" in capsys.readouterr().err

    def test_step_and_format(self, tmp_path, capsys):
        assert main(["geodesic", "--spec", self.write(tmp_path, "geodesic"), "--step", "0.25", "--format", "csv"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "t,xi0,kinetic" and len(lines) == 6

    def test_tolerance_overrides_check(self, tmp_path, capsys):
        assert main(["check", "--spec", self.write(tmp_path, "check"), "--tolerance", "1e-30"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert all(s["tolerance"] == 1e-30 for s in doc["suites"])

    def test_missing_file(self, tmp_path):
        assert main(["divergence", "--spec", str(tmp_path / "nope.json")]) == 2

    def test_console_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "dualflat.cli", "divergence", "--spec", "-"],
            input=job_text("divergence").encode(),
            capture_output=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["mixed_value"] == 12.5
