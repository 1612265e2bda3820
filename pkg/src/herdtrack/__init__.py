"""Multi-target tracking with herded Gibbs truncation of multi-sensor adaptive birth."""
from .birth import (
    AssociationProbabilities,
    BirthCandidate,
    BirthConfig,
    construct_birth_lmb,
    gibbs_conditional,
    non_association_probability,
    per_sensor_pseudolikelihood,
    psi_bar,
)
from .core import (
    GaussianComponent,
    GlmbDensity,
    GlmbHypothesis,
    Label,
    LabeledTrack,
    LmbDensity,
    PruneConfig,
    extract_estimates,
    normalize_hypotheses,
    prune,
)
from .estimator import MultiSensorTracker
from .filters import FilterConfig, predict, step, update_one_sensor
from .gibbs import GibbsConfig, herding_step, perm, sample_chain
from .metrics import MetricConfig, ospa, ospa2
from .models import (
    BirthPrior,
    MeasurementFrame,
    MotionModel,
    Scenario,
    SensorModel,
    TargetSpec,
    clutter_intensity,
    measurement_marginal,
    predict_component,
    simulate,
)

__version__ = "0.1.0"
