from aspstain.metrics.distribution import KID_SCALE, fid, kid
from aspstain.metrics.features import (
    InceptionExtractor,
    TinyRandomConv,
    build_extractor,
    feature_extract,
    staged_features,
)
from aspstain.metrics.image_metrics import PHV_THRESHOLD, PhvResult, phv, ssim
from aspstain.metrics.table import CSV_HEADER, MetricTable
