import json

import pytest

from synthsearch.errors import BatchError, ExecutionError, ValidationError
from synthsearch.executor import (
    ExecutionLimits,
    InterpreterRegistry,
    Sample,
    execute_workflow,
    validate_batch,
)

from conftest import CRASH_SCRIPT, STUB_SCRIPT, make_workflow

REGISTRY = InterpreterRegistry()


def run(script, n=5, limits=None, **kwargs):
    return execute_workflow(
        make_workflow(script=script), n, limits or ExecutionLimits(wall_timeout=20.0), REGISTRY, **kwargs
    )


class TestExecuteWorkflow:
    def test_contract(self):
        samples = run(STUB_SCRIPT, n=5, task="demo")
        assert [s.index for s in samples] == [0, 1, 2, 3, 4]
        assert all(isinstance(s.payload, dict) for s in samples)

    def test_stdin_document_shape(self):
        echo = (
            "import json, sys\n"
            "cfg = json.load(sys.stdin)\n"
            "print(json.dumps({'keys': sorted(cfg)}))\n"
        )
        sample = run(echo, n=1)[0]
        assert sample.payload["keys"] == ["llm_endpoint", "n", "prompts", "task"]

    def test_nonzero_exit_carries_stderr(self):
        with pytest.raises(ExecutionError) as err:
            run(CRASH_SCRIPT, n=1)
        assert "status 3" in str(err.value)
        assert "boom" in err.value.stderr

    def test_timeout(self):
        with pytest.raises(ExecutionError) as err:
            run("import time; time.sleep(30)", n=1, limits=ExecutionLimits(wall_timeout=0.5))
        assert "timed out" in str(err.value)

    def test_short_batch_is_violation(self):
        script = "import json\nfor i in range(4): print(json.dumps({'i': i}))\n"
        with pytest.raises(BatchError):
            run(script, n=5)

    def test_malformed_line_names_line_number(self):
        script = "print('{\"ok\": 1}')\nprint('not json')\n"
        with pytest.raises(ExecutionError) as err:
            run(script, n=2)
        assert "line 2" in str(err.value)

    def test_stdout_overflow_cut(self):
        bomb = "import sys\nwhile True: sys.stdout.write('x' * 65536)\n"
        with pytest.raises(ExecutionError) as err:
            run(bomb, n=1, limits=ExecutionLimits(wall_timeout=20.0, max_stdout_bytes=1024 * 1024))
        assert "stdout limit" in str(err.value)

    def test_env_isolation(self, monkeypatch):
        monkeypatch.setenv("SECRET_TOKEN", "leak-me")
        probe = "import json, os, sys\nsys.stdin.read()\nprint(json.dumps({'env': sorted(os.environ)}))\n"
        sample = run(probe, n=1, limits=ExecutionLimits(wall_timeout=20.0, allowed_env=["PATH"]))[0]
        assert "SECRET_TOKEN" not in sample.payload["env"]
        assert set(sample.payload["env"]) <= {"PATH", "LC_CTYPE", "PYTHONIOENCODING"} | set()

    def test_deterministic_script_identical_batches(self):
        a = run(STUB_SCRIPT, n=3, task="same")
        b = run(STUB_SCRIPT, n=3, task="same")
        assert [s.payload for s in a] == [s.payload for s in b]

    def test_unknown_interpreter(self):
        wf = make_workflow()
        wf.code.interpreter_hint = "cobol"
        with pytest.raises(ValidationError):
            execute_workflow(wf, 1, ExecutionLimits(), REGISTRY)


class TestValidateBatch:
    def _samples(self, indices):
        return [Sample(payload={"i": i}, source_node=0, index=i) for i in indices]

    def test_well_formed(self):
        validate_batch(self._samples(range(5)), 5)

    def test_duplicate_index(self):
        samples = self._samples([0, 1, 1, 3, 4])
        with pytest.raises(BatchError):
            validate_batch(samples, 5)

    def test_bare_string_payload(self):
        samples = self._samples(range(2))
        samples[1].payload = "just text"
        with pytest.raises(BatchError):
            validate_batch(samples, 2)

    def test_wrong_count(self):
        with pytest.raises(BatchError):
            validate_batch(self._samples(range(3)), 5)
