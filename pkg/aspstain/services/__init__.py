from aspstain.services.evaluation_service import EvaluationService, MetricSettings, TranslateReport
from aspstain.services.training_service import (
    HyperParams,
    TrainingService,
    TrainState,
    create_state,
    generator_objective,
    lr_schedule,
    train_step,
)
from aspstain.services.visualization_service import VisualizationService
