"""Operator files and the command-line surface."""

import json

import numpy as np
import pytest

from qmctree import (
    DensityOperator,
    QmcSpec,
    SubsystemLayout,
    sample_density,
    sample_markov_path,
    sample_qmc,
    trace_distance,
)
from qmctree.cli import main
from qmctree.fileio import (
    FileFormatError,
    read_density,
    read_operator,
    write_density,
    write_operator,
)

L3Q = SubsystemLayout(("A", "B", "C"), (2, 2, 2))


def parse_report(text: str) -> dict:
    out = {}
    for line in text.strip().splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


class TestFileIO:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        state = sample_density(L3Q, seed=rng)
        path = tmp_path / "state.json"
        write_density(path, state)
        back = read_density(path)
        assert back.layout == state.layout
        np.testing.assert_array_equal(back.matrix, state.matrix)

    def test_operator_roundtrip(self, tmp_path, rng):
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        m = (m + m.conj().T) / 2
        layout = SubsystemLayout(("A", "B"), (2, 2))
        path = tmp_path / "op.json"
        write_operator(path, layout, m)
        back_layout, back = read_operator(path)
        assert back_layout == layout
        np.testing.assert_array_equal(back, m)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(FileFormatError):
            read_density(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"labels": ["A"], "dims": [2]}))
        with pytest.raises(FileFormatError):
            read_density(path)

    def test_not_a_density(self, tmp_path):
        path = tmp_path / "bad.json"
        data = {
            "labels": ["A"], "dims": [2],
            "matrix": [[[2.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]],
        }
        path.write_text(json.dumps(data))
        with pytest.raises(FileFormatError):
            read_density(path)


@pytest.fixture
def qmc_files(tmp_path):
    state = sample_qmc(QmcSpec(2, 2, ((0.5, 1, 2), (0.5, 2, 1))), seed=101)
    ab, bc = tmp_path / "ab.json", tmp_path / "bc.json"
    write_density(ab, state.marginal(("A", "B")))
    write_density(bc, state.marginal(("B", "C")))
    return state, str(ab), str(bc)


@pytest.fixture
def generic_files(tmp_path):
    state = sample_density(L3Q, seed=102)
    ab, bc = tmp_path / "gab.json", tmp_path / "gbc.json"
    write_density(ab, state.marginal(("A", "B")))
    write_density(bc, state.marginal(("B", "C")))
    return state, str(ab), str(bc)


class TestCheck:
    def test_qmc_exit_zero(self, qmc_files, capsys):
        _, ab, bc = qmc_files
        assert main(["check", ab, bc]) == 0
        report = parse_report(capsys.readouterr().out)
        assert report["verdict"] == "True"

    def test_generic_exit_one(self, generic_files, capsys):
        _, ab, bc = generic_files
        assert main(["check", ab, bc]) == 1
        report = parse_report(capsys.readouterr().out)
        assert report["verdict"] == "False"

    def test_malformed_exit_two(self, tmp_path, qmc_files, capsys):
        _, ab, _ = qmc_files
        bad = tmp_path / "bad.json"
        bad.write_text("nope")
        assert main(["check", ab, str(bad)]) == 2

    def test_missing_file_exit_two(self, qmc_files):
        _, ab, _ = qmc_files
        assert main(["check", ab, "/nonexistent.json"]) == 2


class TestRecover:
    def test_petz_roundtrip(self, qmc_files, tmp_path, capsys):
        state, ab, bc = qmc_files
        out = tmp_path / "out.json"
        assert main(["recover", ab, bc, "-o", str(out)]) == 0
        recovered = read_density(out)
        assert trace_distance(recovered.matrix, state.matrix) < 1e-8

    def test_maxent_agrees_with_petz(self, qmc_files, tmp_path, capsys):
        state, ab, bc = qmc_files
        out_p = tmp_path / "petz.json"
        out_m = tmp_path / "maxent.json"
        assert main(["recover", ab, bc, "-o", str(out_p)]) == 0
        assert main(
            ["recover", ab, bc, "--method", "maxent", "-o", str(out_m)]
        ) == 0
        report = parse_report(capsys.readouterr().out)
        assert float(report["residual"]) <= 1e-6
        assert trace_distance(
            read_density(out_p).matrix, read_density(out_m).matrix
        ) < 1e-6

    def test_inconsistent_marginals_exit_two(self, tmp_path):
        a = sample_density(SubsystemLayout(("A", "B"), (2, 2)), seed=1)
        b = sample_density(SubsystemLayout(("B", "C"), (2, 2)), seed=2)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        write_density(pa, a)
        write_density(pb, b)
        assert main(["recover", str(pa), str(pb), "-o",
                     str(tmp_path / "o.json")]) == 2


class TestSelect:
    def test_joint_markov_chain(self, tmp_path, capsys):
        # diagonal chain: every pair passes the compatibility check, so the
        # mutual-information rule applies without fallback
        rng = np.random.default_rng(103)
        from conftest import classical_chain, random_conditional
        state = classical_chain(
            np.array([0.4, 0.6]),
            random_conditional(rng, 2, 2),
            random_conditional(rng, 2, 2),
        )
        joint = tmp_path / "joint.json"
        write_density(joint, state)
        assert main(["select", "--joint", str(joint)]) == 0
        report = parse_report(capsys.readouterr().out)
        assert report["rule"] == "mutual_information"
        assert report["discarded_pair"] == "AC"

    def test_pair_files_fallback_to_min_entropy(self, tmp_path, capsys):
        # generic joints fail the all-pairs hypothesis; the command warns
        # and falls back
        state = sample_density(L3Q, seed=104)
        paths = []
        for pair in [("A", "B"), ("B", "C"), ("A", "C")]:
            p = tmp_path / f"{''.join(pair)}.json"
            write_density(p, state.marginal(pair))
            paths.append(str(p))
        assert main(["select", "--pairs", *paths]) == 0
        captured = capsys.readouterr()
        report = parse_report(captured.out)
        assert report["rule"] == "min_entropy"
        assert "falling back" in captured.err


class TestTreeCommand:
    def test_joint_input(self, tmp_path, capsys):
        state = sample_markov_path(("A", "B", "C", "D"), (2, 2, 2, 2),
                                   seed=105)
        joint = tmp_path / "joint.json"
        write_density(joint, state)
        out = tmp_path / "est.json"
        assert main(["tree", "--joint", str(joint), "-o", str(out)]) == 0
        report = parse_report(capsys.readouterr().out)
        assert float(report["relative_entropy_gap"]) <= 1e-6
        est = read_density(out)
        assert trace_distance(est.matrix, state.matrix) < 1e-6

    def test_tree_file_input(self, tmp_path, capsys):
        state = sample_markov_path(("A", "B", "C"), (2, 2, 2), seed=106)
        refs = {}
        for pair in [("A", "B"), ("B", "C")]:
            p = tmp_path / f"{''.join(pair)}.json"
            write_density(p, state.marginal(pair))
            refs[",".join(pair)] = str(p)
        desc = tmp_path / "tree.json"
        desc.write_text(json.dumps({
            "labels": ["A", "B", "C"], "dims": [2, 2, 2],
            "edges": [["A", "B"], ["B", "C"]],
            "marginals": refs,
        }))
        out = tmp_path / "est.json"
        assert main(["tree", "--tree-file", str(desc), "-o", str(out)]) == 0
        report = parse_report(capsys.readouterr().out)
        assert report["edges"] == "AB;BC"
        assert trace_distance(read_density(out).matrix, state.matrix) < 1e-7

    def test_incompatible_tree_exit_one(self, tmp_path, capsys):
        joint = sample_density(
            SubsystemLayout(("A", "B", "C", "D"), (2, 2, 2, 2)), seed=107
        )
        path = tmp_path / "joint.json"
        write_density(path, joint)
        assert main(["tree", "--joint", str(path)]) == 1


class TestDiagram:
    def test_qmc_commutes(self, qmc_files, capsys):
        _, ab, bc = qmc_files
        assert main(["diagram", ab, bc]) == 0
        report = parse_report(capsys.readouterr().out)
        assert report["commutes"] == "True"

    def test_generic_does_not(self, generic_files, capsys):
        _, ab, bc = generic_files
        assert main(["diagram", ab, bc]) == 1
        report = parse_report(capsys.readouterr().out)
        assert float(report["distance_two_orders"]) > 1e-3


class TestCounterexample:
    def test_generic_finds_failures(self, capsys):
        assert main(["counterexample", "--samples", "20", "--seed", "7"]) == 0
        report = parse_report(capsys.readouterr().out)
        assert int(report["failures"]) >= 1
        assert report["first_failing_index"] != "none"

    def test_qmc_no_failures(self, capsys):
        assert main([
            "counterexample", "--samples", "20", "--seed", "7", "--qmc"
        ]) == 0
        report = parse_report(capsys.readouterr().out)
        assert int(report["failures"]) == 0

    def test_zero_samples(self, capsys):
        assert main(["counterexample", "--samples", "0"]) == 0
        report = parse_report(capsys.readouterr().out)
        assert report["failure_frequency"] == "0"

    def test_deterministic_under_seed(self, capsys):
        main(["counterexample", "--samples", "10", "--seed", "3"])
        first = capsys.readouterr().out
        main(["counterexample", "--samples", "10", "--seed", "3"])
        second = capsys.readouterr().out
        assert first == second


class TestSample:
    def test_random_with_marginals(self, tmp_path, capsys):
        out = tmp_path / "state.json"
        assert main([
            "sample", "--kind", "random", "--seed", "5",
            "-o", str(out), "--marginal", "A,B", "--marginal", "B,C",
        ]) == 0
        state = read_density(out)
        ab = read_density(f"{out}.AB.json")
        assert trace_distance(
            state.marginal(("A", "B")).matrix, ab.matrix
        ) < 1e-12

    def test_qmc_kind(self, tmp_path, capsys):
        out = tmp_path / "qmc.json"
        assert main([
            "sample", "--kind", "qmc", "--blocks", "0.5:1:2,0.5:2:1",
            "--seed", "5", "-o", str(out),
        ]) == 0
        state = read_density(out)
        assert state.layout.dim_of("B") == 4

    def test_bad_blocks_exit_two(self, tmp_path):
        assert main([
            "sample", "--kind", "qmc", "--blocks", "oops",
            "-o", str(tmp_path / "x.json"),
        ]) == 2
