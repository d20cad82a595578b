from .example1 import Example1Params, example1_spec
from .example2 import Example2Params, example2_spec
from .linear import gbm_spec, scalar_lq

__all__ = ["Example1Params", "Example2Params", "example1_spec", "example2_spec", "gbm_spec", "scalar_lq"]
