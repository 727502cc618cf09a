"""
Tests for the Command-Line Interface

Tests verify the subcommands write schema-valid artifacts and map
library errors to the documented exit codes.
"""

import json
import math

import pytest

from horseshoe.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, EXIT_VERIFICATION, cli


@pytest.fixture
def fast_config_file(tmp_path):
    """
    Small-suite RunConfig document on disk.

    Why use it:
    - verify reads the suite sizes from the configuration
    """
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 7, "suite_size": 5, "parabolic_suite_size": 3}))
    return path


def test_exponents_to_stdout(runner):
    """
    Test that exponents prints the exponent document.

    What we're testing:
    - exit code 0
    - stdout is JSON with the closed-form beta_max
    """
    result = runner.invoke(cli, ["exponents", "--ds", "0.55", "--du", "0.55"])
    assert result.exit_code == EXIT_OK, \
        f"exponents should succeed: {result.output}"
    doc = json.loads(result.stdout)
    assert doc["beta_max"] == pytest.approx(0.495 / 0.3575, rel=1e-12), \
        "beta_max should match the closed form"


def test_exponents_convention_violation(runner):
    result = runner.invoke(cli, ["exponents", "--ds", "0.5", "--du", "0.6"])
    assert result.exit_code == EXIT_VERIFICATION, \
        "d_s0 < d_u0 should be reported as a library error"


def test_exponents_with_sweep(runner, tmp_path):
    out = tmp_path / "exponents.json"
    result = runner.invoke(cli, ["exponents", "--ds", "0.55", "--du", "0.55", "--sweep", "8", "10", "--out", str(out)])
    assert result.exit_code == EXIT_OK, \
        f"Sweep should succeed: {result.output}"
    assert [b["N"] for b in json.loads(out.read_text())["budgets"]] == [8, 9, 10], \
        "One budget per N"


def test_h4_region_csv(runner, tmp_path):
    """Test the (H4) grid CSV: header row, then n(n+1)/2 rows with d_s >= d_u."""
    out = tmp_path / "h4.csv"
    result = runner.invoke(cli, ["h4-region", "--n", "5", "--out", str(out)])
    assert result.exit_code == EXIT_OK, \
        f"h4-region should succeed: {result.output}"
    lines = out.read_text().splitlines()
    assert lines[0] == "d_s,d_u,h4,beta_max", \
        "Header should name the columns"
    for line in lines[1:]:
        d_s, d_u, _, _ = line.split(",")
        assert float(d_s) >= float(d_u), \
            "Rows follow the convention d_s0 >= d_u0"


def test_verify_subset_passes(runner, fast_config_file):
    result = runner.invoke(cli, ["--config", str(fast_config_file), "verify",
                                 "--check", "linear_width_law", "--check", "exponent_identities"])
    assert result.exit_code == EXIT_OK, \
        f"Subset should pass: {result.output}"
    assert json.loads(result.stdout)["passed"] is True, \
        "Report should say passed"


def test_verify_corrupted_formula_exits_1(runner, fast_config_file):
    """
    Test that a corrupted calculus formula fails verify with exit code 1.

    Why this matters:
    - Batch pipelines rely on the exit code to stop on broken numerics
    """
    result = runner.invoke(cli, ["--config", str(fast_config_file), "verify",
                                 "--check", "composition_calculus", "--corrupt", "A_y"])
    assert result.exit_code == EXIT_VERIFICATION, \
        f"Corrupted calculus should exit 1, got {result.exit_code}"
    assert json.loads(result.stdout)["checks"][0]["passed"] is False, \
        "Report should still be printed"


def test_bad_config_exits_2(runner, tmp_path):
    """Test that an invalid RunConfig document exits with code 2."""
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"family": {"lambda_s": 2.0}}))
    result = runner.invoke(cli, ["--config", str(path), "h4-region", "--out", str(tmp_path / "h4.csv")])
    assert result.exit_code == EXIT_CONFIG, \
        f"Invalid config should exit 2, got {result.exit_code}"
    missing = runner.invoke(cli, ["--config", str(tmp_path / "missing.toml"), "exponents"])
    assert missing.exit_code == EXIT_CONFIG, \
        "Unreadable config should exit 2"


def test_bad_interval_path_exits_2(runner):
    result = runner.invoke(cli, ["--path", "0,x", "exponents", "--ds", "0.55", "--du", "0.55"])
    assert result.exit_code == EXIT_CONFIG, \
        "Malformed interval path should exit 2"


@pytest.mark.slow
def test_build_is_deterministic(runner, tmp_path):
    """
    Test that build writes the class dump, summary and geometry, identically twice.

    What we're testing:
    - 126 elements over I0 with a 1e-3 width floor
    - class.jsonl is byte-identical across runs

    Why this matters:
    - Only the verification suites are randomized
    """
    dumps = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = runner.invoke(cli, ["--width-floor", "1e-3", "build", "--out", str(out)])
        assert result.exit_code == EXIT_OK, \
            f"build should succeed: {result.output}"
        assert (out / "build.json").exists() and (out / "geometry.csv").exists(), \
            "Summary and geometry should be written"
        dumps.append((out / "class.jsonl").read_bytes())
    assert dumps[0] == dumps[1], \
        "Class dumps should be byte-identical"
    summary = json.loads((tmp_path / "a" / "build.json").read_text())
    assert summary["size"] == 126, \
        f"Expected 126 elements, got {summary['size']}"


# Pure default family, shallow enough for desk runs: d_s = log 2 / log(1/0.284)
SHALLOW = ["--n-max", "4", "--m-trunc", "3"]


def test_budget_exhausted_exits_3(runner, tmp_path):
    """
    Test that build exits 3 when the element budget runs out.

    What we're testing:
    - exit code 3
    - the partial class is still dumped and marked exhausted
    """
    out = tmp_path / "out"
    result = runner.invoke(cli, ["--n-max", "5", "--max-elements", "10", "build", "--out", str(out)])
    assert result.exit_code == EXIT_BUDGET, \
        f"Budget exhaustion should exit 3, got {result.exit_code}: {result.output}"
    header = json.loads((out / "class.jsonl").read_text().splitlines()[0])
    assert header["exhausted"] is True and header["size"] > 0, \
        "Partial class should be written and flagged"


def test_extend_onto_child(runner, tmp_path):
    """
    Test that extend reloads a dump and rebuilds it over a child interval.

    What we're testing:
    - exit code 0
    - the new header sits at level 1 with path [0]
    """
    parent, child = tmp_path / "parent", tmp_path / "child"
    built = runner.invoke(cli, ["--n-max", "3", "build", "--out", str(parent)])
    assert built.exit_code == EXIT_OK, \
        f"build should succeed: {built.output}"
    result = runner.invoke(cli, ["--n-max", "3", "extend", "--load", str(parent / "class.jsonl"),
                                 "--child", "0", "--out", str(child)])
    assert result.exit_code == EXIT_OK, \
        f"extend should succeed: {result.output}"
    header = json.loads((child / "class.jsonl").read_text().splitlines()[0])
    assert header["interval"]["level"] == 1 and header["interval"]["path"] == [0], \
        f"Extended class should sit over the first child, got {header['interval']}"
    assert header["size"] >= 30, \
        "Extension keeps every parent element"


def test_extend_bad_child_exits_2(runner, tmp_path):
    """
    Test that a child index outside the candidates is a configuration error.

    Why this matters:
    - A typo in --child should exit 2 with a message, not a traceback
    """
    parent = tmp_path / "parent"
    runner.invoke(cli, ["--n-max", "3", "build", "--out", str(parent)])
    result = runner.invoke(cli, ["extend", "--load", str(parent / "class.jsonl"),
                                 "--child", "99", "--out", str(tmp_path / "child")])
    assert result.exit_code == EXIT_CONFIG, \
        f"Out-of-range child should exit 2, got {result.exit_code}"
    assert "out of range" in result.output, \
        "Message should name the range problem"


@pytest.mark.slow
def test_build_at_explicit_t(runner, tmp_path):
    """
    Test build at an explicit parameter value below the tongue.

    What we're testing:
    - the zero-length interval serializes (exit 0, zero candidates)
    - every tongue pair is separated, so no parabolic element appears
    - the dump cannot be extended onto a child (exit 2)

    Why this matters:
    - --t runs used to crash while writing the summary
    """
    out = tmp_path / "out"
    result = runner.invoke(cli, ["--width-floor", "1e-3", "--t", "-0.1", "build", "--out", str(out)])
    assert result.exit_code == EXIT_OK, \
        f"build at an explicit t should succeed: {result.output}"
    summary = json.loads((out / "build.json").read_text())
    assert summary["counts"]["parabolic"] == 0, \
        f"No parabolic elements below the tongue, got {summary['counts']}"
    assert summary["interval"]["length"] == 0.0 and summary["interval"]["candidates"] == 0, \
        "Explicit t is a zero-length interval"
    assert "transverse" not in summary["relations"], \
        f"No tongue pair can be transverse, got {summary['relations']}"
    extended = runner.invoke(cli, ["extend", "--load", str(out / "class.jsonl"), "--child", "0",
                                   "--out", str(tmp_path / "child")])
    assert extended.exit_code == EXIT_CONFIG, \
        f"A zero-length interval has no children, got exit {extended.exit_code}"


def test_dimension_subcommand(runner):
    """
    Test the dimension report of the pure default family.

    What we're testing:
    - d_s = log 2 / log(1/0.284) within 1e-6
    - the Gibbs constant is 1 for uniform contraction
    """
    result = runner.invoke(cli, SHALLOW + ["dimension"])
    assert result.exit_code == EXIT_OK, \
        f"dimension should succeed: {result.output}"
    doc = json.loads(result.stdout)
    assert doc["d_s"] == pytest.approx(math.log(2.0) / math.log(1.0 / 0.284), abs=1e-6), \
        f"Unexpected d_s {doc['d_s']}"
    assert doc["gibbs_constant"] == pytest.approx(1.0, abs=1e-6), \
        "Uniform contraction gives Gibbs constant 1"
    assert doc["truncation"]["m_trunc"] == 3, \
        "Report should echo the truncation"


def test_gibbs_subcommand(runner, tmp_path):
    """Test the Gibbs CSV: one row per prime chain of depth <= 3, unit mass per base rectangle."""
    out = tmp_path / "gibbs.csv"
    result = runner.invoke(cli, SHALLOW + ["gibbs", "--out", str(out)])
    assert result.exit_code == EXIT_OK, \
        f"gibbs should succeed: {result.output}"
    lines = out.read_text().splitlines()
    assert lines[0] == "word,depth,width,mu", \
        "Header should name the columns"
    rows = [line.split(",") for line in lines[1:]]
    assert len(rows) == 4 + 8 + 16, \
        f"Expected 28 cylinders, got {len(rows)}"
    top = sum(float(mu) for _, depth, _, mu in rows if depth == "1")
    assert top == pytest.approx(2.0, rel=1e-12), \
        "Depth-1 cylinders carry mass 1 in each of the two rectangles"


def test_dump_tangency(runner, tmp_path):
    out = tmp_path / "tangency.csv"
    result = runner.invoke(cli, ["dump-tangency", "--n", "5", "--out", str(out)])
    assert result.exit_code == EXIT_OK, \
        f"dump-tangency should succeed: {result.output}"
    lines = out.read_text().splitlines()
    assert lines[0] == "y0,x1,c_bar" and len(lines) == 1 + 25, \
        "One row per grid node"


def test_dump_geometry(runner, tmp_path):
    """Test that the geometry CSV includes the tongue boundaries at the midpoint of I0."""
    out = tmp_path / "geometry.csv"
    result = runner.invoke(cli, ["dump-geometry", "--out", str(out)])
    assert result.exit_code == EXIT_OK, \
        f"dump-geometry should succeed: {result.output}"
    lines = out.read_text().splitlines()
    assert lines[0] == "curve,index,x,y", \
        "Header should name the columns"
    curves = {line.split(",")[0] for line in lines[1:]}
    assert {"R1", "R2", "L_u.lower", "L_s.upper"} <= curves, \
        f"Rectangles and tongues expected, got {sorted(curves)}"
