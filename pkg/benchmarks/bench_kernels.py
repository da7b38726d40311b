"""Compare the compiled and NumPy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the nonlinear term, a block of micro-steps and one full scheme run on
the default 32x16 grid, and checks that both backends agree.
"""

import argparse
import timeit

import numpy as np

from pesplit import kernels
from pesplit.config import StudyConfig
from pesplit.experiment import _configs
from pesplit.noise import sample_path
from pesplit.splitting import run_splitting


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    study = StudyConfig(kind="diagonal-multiplicative")
    ref_cfg, schemes = _configs(study)
    g = ref_cfg.grid
    tr = g.transforms
    rng = np.random.default_rng(0)
    cu = rng.standard_normal(g.shape) / g.eigenvalues
    cu[:, 0] = 0.0
    noise = ref_cfg.noise
    steps = 64
    dw = rng.standard_normal((steps, noise.m_W)) * 0.01
    delta = 1e-3
    lin = np.exp(-delta * g.eigenvalues)
    ones = np.ones(g.shape)
    path = sample_path(noise, 1, study.n_fine, study.T)
    cfg = schemes[16]

    backends = kernels.available_backends()
    results, outputs = {}, {}
    for name in backends:
        be = kernels.get_backend(name)
        out = np.empty((steps + 1,) + g.shape)

        def step_block():
            be.advance(cu, delta, lin, ones, True, tr, noise.shapes, noise.add_amp, noise.mult_amp,
                       g.weights, dw, out)

        def full_run():
            saved = kernels._active
            kernels._active = be
            try:
                return run_splitting(cfg, path)
            finally:
                kernels._active = saved

        results[name] = {
            "nonlinear": _best(lambda: be.nonlinear(cu, cu, tr), args.repeat, 50),
            f"advance x{steps}": _best(step_block, args.repeat, 1),
            "run_splitting n=16": _best(full_run, args.repeat, 1),
        }
        outputs[name] = full_run().eta_minus[-1]

    print(f"grid {g.Nx}x{g.Nz}, m_W={noise.m_W}, default backend: {kernels.BACKEND}")
    print(f"{'kernel':<22}" + "".join(f"{b:>14}" for b in backends) + ("       speedup" if len(backends) > 1 else ""))
    for key in results["python"]:
        row = f"{key:<22}" + "".join(f"{results[b][key] * 1e3:>11.3f} ms" for b in backends)
        if "cython" in results:
            row += f"{results['python'][key] / results['cython'][key]:>13.1f}x"
        print(row)
    if "cython" in outputs:
        diff = float(np.abs(outputs["cython"] - outputs["python"]).max())
        print(f"max |cython - python| on eta(T): {diff:.2e}")
    else:
        print("compiled extension not built; only the NumPy backend was timed")


if __name__ == "__main__":
    main()
