from tube_teller.training._sampler import (
    SampleSet,
    SamplerConfig,
    create_annotation_samples,
    create_tailored_samples,
    determine_pi,
    dump_samples,
    pseudo_mask_from_centerline,
)
from tube_teller.training._trainer import (
    IterationRecord,
    TrainConfig,
    TrainingScene,
    TrainRun,
    iterative_train,
)
