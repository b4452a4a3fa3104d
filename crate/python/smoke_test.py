"""Builds the extension module and exercises the main bindings."""

import importlib
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build_module(dest: pathlib.Path) -> None:
    subprocess.run(["cargo", "build", "--release", "-p", "pissa-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "libpissa_py.so"
    shutil.copy(lib, dest / "pissa.so")


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        build_module(tmp)
        sys.path.insert(0, str(tmp))
        pissa = importlib.import_module("pissa")

        w = pissa.Matrix.randn(48, 32, seed=0)
        layer = pissa.pissa_init(w, 8)
        assert layer.rank == 8 and layer.a.shape == (48, 8) and layer.b.shape == (8, 32)
        assert layer.reconstruction_error(w) < 1e-10

        x = pissa.Matrix.randn(5, 48, seed=1)
        y = layer.forward(x)
        assert (y - x @ w).max_abs() < 1e-10 * (x @ w).max_abs()

        s = pissa.singular_values(w)
        assert all(a >= b for a, b in zip(s, s[1:]))
        fast = pissa.pissa_init(w, 8, niter=8, seed=3)
        assert fast.reconstruction_error(w) < 1e-10

        levels = pissa.nf4_levels()
        assert len(levels) == 16 and levels[0] == -1.0 and levels[7] == 0.0 and levels[15] == 1.0
        q = pissa.nf4_roundtrip(w)
        assert (pissa.nf4_roundtrip(q) - q).max_abs() == 0.0

        ratio = {
            "qlora": pissa.error_reduction_ratio(w, pissa.qlora_init(w, 8)),
            "loftq": pissa.error_reduction_ratio(w, pissa.loftq_init(w, 8, iters=5)),
            "qpissa": pissa.error_reduction_ratio(w, pissa.qpissa_init(w, 8, iters=5)),
        }
        assert ratio["qlora"] == 0.0 and ratio["qpissa"] > ratio["loftq"] > 0.0, ratio

        trained = layer.with_adapter(layer.a + pissa.Matrix.randn(48, 8, seed=4, std=0.1), layer.b)
        da, db = pissa.lora_delta(layer, trained)
        assert da.shape == (48, 16) and db.shape == (16, 32)
        via_delta = x @ w + (x @ da) @ db
        assert (via_delta - trained.forward(x)).max_abs() < 1e-10

        try:
            pissa.pissa_init(w, 0)
        except ValueError:
            pass
        else:
            raise AssertionError("rank 0 accepted")

        print(f"python smoke test ok: {ratio}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
