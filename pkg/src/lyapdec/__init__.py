"""Bang-bang decompositions of relaxed densities via a dual method.

Given functions ``f_1..f_m : [0,1]^d -> R^n`` and a relaxed density
``theta_bar`` (pointwise probability weights over the index set), find a
partition of the cube into sets ``E_1..E_m`` with
``sum_i int_{E_i} f_i = sum_i int theta_bar_i f_i``.  The partition comes from
maximizing a concave dual over multipliers ``lambda in R^n`` and reading off
the pointwise minimizer of ``v_i - lambda . f_i``.
"""

from .dual import (DualCertificate, DualConfig, Partition, PartitionReport, dual_subgradient,
                   dual_value, maximize_dual, recover_bang_bang, tie_sets, verify_partition)
from .errors import (CertificateInconsistent, HypothesisViolation, LyapdecError, NongenericOutput,
                     ResourceError, ValidationError)
from .family import (CountableFamilySpec, FunctionFamily, MomentTarget, RelaxedDensity,
                     SampledDomain, build_domain, compute_alpha, truncate_countable,
                     truncate_density)
from .fields import AuxiliaryField, sample_field
from .generic import (DegeneracyReport, DetectConfig, GenericityVerdict, detect_degeneracy,
                      is_generic, perturb_to_generic, residuality_probe)
from .oracle import build_discrete_lp, phase1_feasible, simplex_solve

__version__ = "0.1.0"
