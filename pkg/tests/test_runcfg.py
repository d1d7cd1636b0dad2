"""Config parsing, run orchestration, output layout, run log grammar, CLI."""

from __future__ import annotations

import io
import json
from decimal import Decimal
from pathlib import Path

import pytest

from conftest import make_candidate
from hdlsmith.backends import MockBackend, lookup_model
from hdlsmith.cli import main as cli_main
from hdlsmith.core import (
    CostLedger,
    DepthNode,
    EvalOutcome,
    OutcomeKind,
    SearchTrace,
    Termination,
    TokenUsage,
    compute_cost,
)
from hdlsmith.faketools import offline_evaluate, passing_reply, reply_with_module
from hdlsmith.prompts import FeedbackMode
from hdlsmith.runcfg import (
    InvalidScheduleError,
    MissingFileError,
    MissingKeyError,
    TypeMismatchError,
    build_schedule,
    execute_run,
    load_config,
    write_run_log,
)

EXAMPLE_CONFIG = {
    "general": {
        "prompt": "./design_prompt.sv",
        "name": "top_module",
        "testbench": "./testbench.sv",
        "model_family": "ChatGPT",
        "model_id": "gpt-4o-mini",
        "num_candidates": 5,
        "iterations": 5,
        "outdir": "output_dir",
        "log": "log.txt",
        "mixed-model": False,
    },
    "mixed-model": {
        "model1": {
            "start_iteration": 0,
            "model_family": "ChatGPT",
            "model_id": "gpt-4o-mini",
        },
        "model2": {
            "start_iteration": -1,
            "model_family": "ChatGPT",
            "model_id": "gpt-4o",
        },
    },
}


def write_config(tmp_path: Path, document: dict | None = None) -> Path:
    (tmp_path / "design_prompt.sv").write_text("// design prompt\nmodule top_module();")
    (tmp_path / "testbench.sv").write_text("module tb(); endmodule")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document if document is not None else EXAMPLE_CONFIG))
    return path


class TestLoadConfig:
    def test_published_shape_parses(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.num_candidates == 5
        assert cfg.iterations == 5
        assert cfg.mixed_model is False
        assert cfg.model_id == "gpt-4o-mini"
        assert [(e.start_iteration, e.model_id) for e in cfg.schedule_entries] == [
            (0, "gpt-4o-mini"),
            (-1, "gpt-4o"),
        ]

    def test_inactive_schedule_entries_are_retained_but_unused(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        schedule = build_schedule(cfg)
        assert [e.model.model_id for e in schedule.entries] == ["gpt-4o-mini"]

    def test_active_mixed_model_schedule(self, tmp_path):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        document["general"]["mixed-model"] = True
        cfg = load_config(write_config(tmp_path, document))
        schedule = build_schedule(cfg)
        assert schedule.final_model.model_id == "gpt-4o"

    def test_missing_testbench_key(self, tmp_path):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        del document["general"]["testbench"]
        with pytest.raises(MissingKeyError) as excinfo:
            load_config(write_config(tmp_path, document))
        assert excinfo.value.key_path == "general.testbench"

    def test_negative_iterations(self, tmp_path):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        document["general"]["iterations"] = -3
        with pytest.raises(TypeMismatchError) as excinfo:
            load_config(write_config(tmp_path, document))
        assert excinfo.value.key_path == "general.iterations"

    def test_zero_candidates(self, tmp_path):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        document["general"]["num_candidates"] = 0
        with pytest.raises(TypeMismatchError):
            load_config(write_config(tmp_path, document))

    def test_missing_prompt_file(self, tmp_path):
        path = write_config(tmp_path)
        (tmp_path / "design_prompt.sv").unlink()
        with pytest.raises(MissingFileError) as excinfo:
            load_config(path)
        assert excinfo.value.key_path == "general.prompt"

    def test_unknown_keys_warn(self, tmp_path):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        document["general"]["unknown_knob"] = 1
        with pytest.warns(UserWarning, match="unknown configuration key"):
            load_config(write_config(tmp_path, document))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda entries: entries["model1"].update(start_iteration=1),  # no 0 entry
            lambda entries: entries["model2"].update(start_iteration=0),  # duplicate 0
            lambda entries: entries.update(
                model3={"start_iteration": -1, "model_family": "ChatGPT", "model_id": "x"}
            ),  # second sentinel
        ],
    )
    def test_invalid_schedules(self, tmp_path, mutate):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        document["general"]["mixed-model"] = True
        mutate(document["mixed-model"])
        with pytest.raises(InvalidScheduleError):
            load_config(write_config(tmp_path, document))

    def test_feedback_mode_parsing(self, tmp_path):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        document["general"]["feedback_mode"] = "full"
        cfg = load_config(write_config(tmp_path, document))
        assert cfg.feedback_mode is FeedbackMode.FULL_CONTEXT

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(TypeMismatchError):
            load_config(path)


class TestRunLogGrammar:
    def make_trace(self):
        model = lookup_model("gpt-4o-mini")
        outcome = EvalOutcome(
            OutcomeKind.SIMULATED, mismatches=6220, samples=6283, sim_stdout="..."
        )
        candidates = []
        for index, (out_tokens, length) in enumerate([(241, 627), (373, 1036)]):
            usage = TokenUsage(396, out_tokens)
            candidates.append(
                make_candidate(
                    outcome=outcome,
                    usage=usage,
                    cost=compute_cost(usage, model),
                    module_src="x" * length,
                    depth=0,
                    index=index,
                )
            )
        node = DepthNode(0, "ChatGPT", "gpt-4o-mini", tuple(candidates), 0)
        return SearchTrace((node,), (0, 0), Termination.MAX_DEPTH_REACHED, CostLedger())

    def test_log_lines(self):
        sink = io.StringIO()
        write_run_log(self.make_trace(), sink)
        lines = sink.getvalue().splitlines()
        assert lines[0] == "Iteration: 0"
        assert lines[1] == "Model type: ChatGPT"
        assert lines[2] == "Model ID: gpt-4o-mini"
        assert lines[3] == "Number of responses: 2"
        assert "Simulation error" in lines
        assert "Mismatches: 6220" in lines
        assert "Samples: 6283" in lines
        assert "Cost for response 0: $0.0002040000" in lines
        assert "Cost for response 1: $0.0002832000" in lines
        assert "Response ranks: [0.010027057138309725, 0.010027057138309725]" in lines
        assert "Response lengths: [627, 1036]" in lines

    def test_passing_candidate_label(self):
        outcome = EvalOutcome(OutcomeKind.SIMULATED, mismatches=0, samples=8)
        node = DepthNode(
            0, "mock", "mock", (make_candidate(outcome=outcome),), 0
        )
        trace = SearchTrace((node,), (0, 0), Termination.ALL_TESTS_PASSED, CostLedger())
        sink = io.StringIO()
        write_run_log(trace, sink)
        assert "Simulation passed" in sink.getvalue()
        assert "Mismatches: 0" in sink.getvalue()

    def test_crash_line_uses_diagnosis(self):
        outcome = EvalOutcome(
            OutcomeKind.SIM_CRASH_OR_TIMEOUT,
            diagnosis="Simulation timed out after 60 seconds and was killed.",
        )
        node = DepthNode(0, "mock", "mock", (make_candidate(outcome=outcome),), 0)
        trace = SearchTrace((node,), (0, 0), Termination.MAX_DEPTH_REACHED, CostLedger())
        sink = io.StringIO()
        write_run_log(trace, sink)
        assert "Simulation timed out after 60 seconds" in sink.getvalue()


class TestExecuteRun:
    def run_config(self, tmp_path, *, k=2, d=1):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        document["general"].update(
            model_family="mock", model_id="mock", num_candidates=k, iterations=d
        )
        return load_config(write_config(tmp_path, document))

    def listing(self, root: Path) -> list[str]:
        return sorted(
            str(p.relative_to(root)) for p in root.rglob("*") if not p.is_dir()
        )

    def test_never_passing_layout(self, tmp_path):
        cfg = self.run_config(tmp_path)
        script = {
            ("top_module", d, i): reply_with_module("mismatches=3 samples=9")
            for d in range(2)
            for i in range(2)
        }
        trace = execute_run(cfg, {"mock": MockBackend(script)}, evaluator=offline_evaluate)
        assert trace.termination is Termination.MAX_DEPTH_REACHED
        expected = ["log.txt"]
        for d in range(2):
            for i in range(2):
                base = f"iter{d}/response{i}"
                expected += [
                    f"{base}/log.txt",
                    f"{base}/top_module.sv",
                    f"{base}/top_module.vvp",
                    f"{base}/top_module_tb.sv",
                ]
        assert self.listing(cfg.outdir) == sorted(expected)

    def test_early_exit_leaves_only_iter0(self, tmp_path):
        cfg = self.run_config(tmp_path)
        script = {("top_module", 0, 0): passing_reply()}
        trace = execute_run(cfg, {"mock": MockBackend(script)}, evaluator=offline_evaluate)
        assert trace.termination is Termination.ALL_TESTS_PASSED
        dirs = {p.name for p in cfg.outdir.iterdir() if p.is_dir()}
        assert dirs == {"iter0"}

    def test_no_module_candidate_gets_log_only(self, tmp_path):
        cfg = self.run_config(tmp_path, k=1, d=0)
        trace = execute_run(cfg, {"mock": MockBackend({})}, evaluator=offline_evaluate)
        assert trace.best().outcome.kind is OutcomeKind.NO_MODULE
        response_dir = cfg.outdir / "iter0" / "response0"
        assert [p.name for p in response_dir.iterdir()] == ["log.txt"]

    def test_top_level_log_written(self, tmp_path):
        cfg = self.run_config(tmp_path, k=1, d=0)
        execute_run(cfg, {"mock": MockBackend({})}, evaluator=offline_evaluate)
        text = (cfg.outdir / "log.txt").read_text()
        assert text.startswith("Iteration: 0\n")
        assert "Model type: mock" in text

    def test_layout_round_trips_to_trace_shape(self, tmp_path):
        from hdlsmith.runcfg import scan_output_tree, trace_shape

        cfg = self.run_config(tmp_path, k=2, d=2)
        script = {
            ("top_module", 0, 0): reply_with_module("compile-error"),
            ("top_module", 0, 1): reply_with_module("mismatches=4 samples=8"),
            ("top_module", 1, 0): "no module at all",
            ("top_module", 1, 1): reply_with_module("hang"),
            ("top_module", 2, 0): reply_with_module("mismatches=1 samples=8"),
            ("top_module", 2, 1): reply_with_module("warning\n  // eda: silent"),
        }
        trace = execute_run(cfg, {"mock": MockBackend(script)}, evaluator=offline_evaluate)
        assert scan_output_tree(cfg.outdir) == trace_shape(trace)

    def test_ledger_total_equals_sum_of_logged_costs(self, tmp_path):
        document = json.loads(json.dumps(EXAMPLE_CONFIG))
        document["general"].update(num_candidates=2, iterations=1)
        cfg = load_config(write_config(tmp_path, document))
        backend = MockBackend(
            {
                ("top_module", d, i): reply_with_module("mismatches=3 samples=9")
                for d in range(2)
                for i in range(2)
            },
            tokens_per_reply=TokenUsage(396, 241),
        )
        # The configured model is gpt-4o-mini under the ChatGPT family.
        trace = execute_run(cfg, {"ChatGPT": backend}, evaluator=offline_evaluate)
        logged = [
            Decimal(line.split("$")[1])
            for line in (cfg.outdir / "log.txt").read_text().splitlines()
            if line.startswith("Cost for response")
        ]
        assert len(logged) == 4
        assert sum(logged, Decimal(0)) == trace.ledger.totals.cost_usd

    def test_tool_version_header_with_real_toolchain(self, tmp_path):
        from test_edatools import write_fake_binaries

        cfg = self.run_config(tmp_path, k=1, d=0)
        script = {("top_module", 0, 0): reply_with_module()}
        trace = execute_run(
            cfg, {"mock": MockBackend(script)}, tools=write_fake_binaries(tmp_path)
        )
        text = (cfg.outdir / "log.txt").read_text()
        assert text.startswith("Tool version: Fake Verilog Compiler 99.0\n")
        assert trace.best().outcome.kind is OutcomeKind.SIMULATED


class TestCli:
    def write_mock_script(self, tmp_path, replies: dict[str, str]) -> Path:
        path = tmp_path / "script.json"
        path.write_text(json.dumps({"replies": replies}))
        return path

    def test_run_exit_codes(self, tmp_path, capsys):
        config_path = write_config(tmp_path)
        script = self.write_mock_script(
            tmp_path, {"top_module/0/0": passing_reply()}
        )
        code = cli_main(
            [
                "run",
                "--config", str(config_path),
                "--override", "general.model_family=mock",
                "--override", "general.model_id=mock",
                "--override", "general.num_candidates=1",
                "--override", "general.iterations=0",
                "--backend", f"mock:{script}",
                "--offline-tools",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "Termination: all_tests_passed" in out

    def test_run_failure_exit_code(self, tmp_path):
        config_path = write_config(tmp_path)
        script = self.write_mock_script(tmp_path, {})
        code = cli_main(
            [
                "run",
                "--config", str(config_path),
                "--override", "general.model_family=mock",
                "--override", "general.model_id=mock",
                "--override", "general.iterations=0",
                "--backend", f"mock:{script}",
                "--offline-tools",
            ]
        )
        assert code == 1

    def test_bench_cli_writes_report(self, tmp_path, capsys):
        suite = tmp_path / "suite"
        suite.mkdir()
        for stem in ("alpha", "beta"):
            (suite / f"{stem}_prompt.sv").write_text(f"// build {stem}")
            (suite / f"{stem}_tb.sv").write_text("module tb(); endmodule")
        out = tmp_path / "report.json"
        code = cli_main(
            [
                "bench",
                "--suite", str(suite),
                "--grid", "k=1;d=0,1",
                "--out", str(out),
                "--offline-tools",
                "--workdir", str(tmp_path / "work"),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["results"]) == 2
        assert {row["task"] for row in payload["results"][0]["per_task"]} == {"alpha", "beta"}
        # Default mock backend means the tasks actually ran (and failed).
        assert all(row["queries_used"] == 1 for row in payload["results"][0]["per_task"])
