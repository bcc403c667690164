import subprocess
import tempfile

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: the decoder re-runs the encoder's float32 arithmetic and
# must reproduce it bit for bit, so FMA contraction (which skips the
# intermediate rounding of a*b) has to stay disabled. Vector widening is fine:
# lanes are independent elementwise ops.
CFLAGS = ["-O3", "-ffp-contract=off"]


def _compiler_accepts(flag):
    with tempfile.NamedTemporaryFile(suffix=".c", mode="w") as f:
        f.write("int main(void){return 0;}\n")
        f.flush()
        probe = subprocess.run(
            ["cc", flag, "-x", "c", f.name, "-o", "/dev/null"],
            capture_output=True,
        )
    return probe.returncode == 0


for _flag in ("-march=x86-64-v3",):
    try:
        if _compiler_accepts(_flag):
            CFLAGS.append(_flag)
            break
    except OSError:
        break

ext = Extension(
    "elic._kernels",
    ["src/elic/_kernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=CFLAGS,
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
