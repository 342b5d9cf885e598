"""Gradient checker: coverage of op kinds and result bookkeeping."""

from mseg.gradcheck import TOL, format_results, run_gradcheck

REQUIRED_PREFIXES = ("conv", "batchnorm", "act-relu", "act-relu6", "act-sigmoid", "maxpool",
                     "upsample", "ewise-add", "ewise-mul", "concat", "loss-bce", "loss-dice",
                     "loss-combined", "rfb-composite", "aggregation-composite")


class TestRunGradcheck:
    def test_every_op_kind_passes(self):
        results = run_gradcheck(seed=0)
        names = [r.name for r in results]
        for want in REQUIRED_PREFIXES:
            assert any(n.startswith(want) for n in names), f"no case covers {want}"
        for r in results:
            assert r.passed, f"{r.name}: {r.max_rel_err:.3e} > {r.tolerance}"
            assert r.max_rel_err < TOL
            assert r.tolerance == TOL

    def test_format_lists_every_case(self):
        results = run_gradcheck(seed=1)
        text = format_results(results)
        lines = text.strip().splitlines()
        assert len(lines) == len(results)
        assert all("pass" in ln for ln in lines)
        assert all("max_rel_err" in ln for ln in lines)
