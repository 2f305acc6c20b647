"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy fallback
takes over. Set ``PCMDP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from pcmdp import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("PCMDP_PURE_PYTHON"):
    try:
        from pcmdp import _kernels_c as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

backup_step = _impl.backup_step
policy_step = _impl.policy_step
ucbvi_step = _impl.ucbvi_step
rollout_policy = _impl.rollout_policy
rollout_tables = _impl.rollout_tables
exaq_update = _impl.exaq_update
ql_update = _impl.ql_update
greedy_tables = _impl.greedy_tables


def backends():
    """Return the importable backend modules keyed by name."""
    found = {"python": _kernels_py}
    try:
        from pcmdp import _kernels_c
        found["cython"] = _kernels_c
    except ImportError:
        pass
    return found
