"""Time the jitted kernels against their pure-numpy fallbacks.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 7]

Sizes mirror the real workloads: pulse counts like a sixth-order shoebox
response, frame counts like a few seconds of streamed audio. Each route is
checked for agreement before it is timed; add_pulses must match bit for
bit, overlap-add matches bit for bit at half-window hop and to round-off
at quarter hop (the numpy route reorders the four-term sums).
"""

import argparse
import time

import numpy as np

from beambank import _accel


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_add_pulses(repeats):
    rng = np.random.default_rng(0)
    n_out = 20000
    cases = {
        "order-1 (7 pulses)": 7,
        "order-6 (500 pulses)": 500,
        "dense (5000 pulses)": 5000,
    }
    print("add_pulses: scatter 81-tap windowed-sinc pulses")
    for label, n_pulses in cases.items():
        delays = rng.uniform(0.0, n_out - 100.0, size=n_pulses)
        amps = rng.uniform(0.01, 1.0, size=n_pulses)

        ref = np.zeros(n_out)
        _accel.add_pulses_numpy(ref, delays, amps)
        rows = [("numpy", lambda: _accel.add_pulses_numpy(np.zeros(n_out), delays, amps))]
        if _accel.add_pulses_numba is not None:
            jit = np.zeros(n_out)
            _accel.add_pulses_numba(jit, delays, amps)
            assert np.array_equal(ref, jit), "kernel routes disagree"
            rows.append(
                ("numba", lambda: _accel.add_pulses_numba(np.zeros(n_out), delays, amps))
            )
        timed = {name: best_of(fn, repeats) for name, fn in rows}
        line = "  ".join(f"{name} {t * 1e6:8.1f} us" for name, t in timed.items())
        if len(timed) == 2:
            line += f"  speedup {timed['numpy'] / timed['numba']:.1f}x"
        print(f"  {label:22s} {line}")


def bench_overlap_add(repeats):
    rng = np.random.default_rng(1)
    n_fft = 512
    print("overlap_add: weighted synthesis accumulation")
    for hop, tol in ((n_fft // 2, 0.0), (n_fft // 4, 1e-13)):
        for seconds in (1, 10):
            n_frames = seconds * 16000 // hop
            frames = rng.standard_normal((n_frames, n_fft))
            out_len = (n_frames - 1) * hop + n_fft

            ref = np.zeros(out_len)
            _accel.overlap_add_numpy(frames, hop, ref)
            rows = [
                ("numpy", lambda: _accel.overlap_add_numpy(frames, hop, np.zeros(out_len)))
            ]
            if _accel.overlap_add_numba is not None:
                jit = np.zeros(out_len)
                _accel.overlap_add_numba(frames, hop, jit)
                err = float(np.max(np.abs(ref - jit)))
                assert err <= tol, f"routes disagree by {err:.3e} at hop {hop}"
                rows.append(
                    ("numba",
                     lambda: _accel.overlap_add_numba(frames, hop, np.zeros(out_len)))
                )
            timed = {name: best_of(fn, repeats) for name, fn in rows}
            line = "  ".join(f"{name} {t * 1e6:8.1f} us" for name, t in timed.items())
            if len(timed) == 2:
                line += f"  speedup {timed['numpy'] / timed['numba']:.1f}x"
            print(f"  hop {hop:3d}, {seconds:2d} s audio   {line}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7, help="best-of repeat count")
    args = parser.parse_args()
    route = "numba + numpy" if _accel.USE_NUMBA else "numpy only (set by flag or missing numba)"
    print(f"active routes: {route}")
    bench_add_pulses(args.repeats)
    bench_overlap_add(args.repeats)


if __name__ == "__main__":
    main()
