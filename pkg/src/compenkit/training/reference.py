"""
Published reference figures for the full-resolution method.

These were measured on real projector-camera rigs at 1024x1024 and are kept
for side-by-side display in reports; they are not targets for the synthetic
desk-scale runs.
"""

from compenkit.core.schemas import ImageMetrics

# Averages over 19 real setups.
UNCOMPENSATED = ImageMetrics(psnr=11.4813, rmse=0.4676, ssim=0.2384, delta_e=21.7226)
FULL_MODEL = ImageMetrics(psnr=20.9496, rmse=0.1554, ssim=0.6012, delta_e=7.5901)

# Ablation rows keyed by compenkit variant names.
VARIANT_REFERENCE: dict[str, ImageMetrics] = {
    "full": ImageMetrics(psnr=20.9468, rmse=0.1554, ssim=0.6011, delta_e=7.5746),
    "no_p1": ImageMetrics(psnr=20.6688, rmse=0.1606, ssim=0.5932, delta_e=7.7296),
    "no_p2": ImageMetrics(psnr=20.8284, rmse=0.1576, ssim=0.5953, delta_e=7.6685),
    "no_p1p2": ImageMetrics(psnr=20.4553, rmse=0.1646, ssim=0.5915, delta_e=8.1839),
    "no_r1r2": ImageMetrics(psnr=20.6765, rmse=0.1606, ssim=0.5846, delta_e=7.6971),
    "coarse_only": ImageMetrics(psnr=20.4837, rmse=0.1640, ssim=0.5741, delta_e=7.8553),
    "l1": ImageMetrics(psnr=20.7247, rmse=0.1595, ssim=0.5571, delta_e=7.7462),
    "l2": ImageMetrics(psnr=20.3679, rmse=0.1663, ssim=0.5465, delta_e=8.1671),
    "ssim": ImageMetrics(psnr=18.9372, rmse=0.1964, ssim=0.5471, delta_e=11.3003),
    "l1+l2": ImageMetrics(psnr=20.7946, rmse=0.1582, ssim=0.5555, delta_e=7.7017),
    "l1+ssim": ImageMetrics(psnr=20.8897, rmse=0.1564, ssim=0.5984, delta_e=7.6284),
    "l2+ssim": ImageMetrics(psnr=20.3312, rmse=0.1670, ssim=0.5917, delta_e=8.7418),
    "l1+l2+ssim": ImageMetrics(psnr=20.9468, rmse=0.1554, ssim=0.6011, delta_e=7.5746),
}

# Training-set sizes swept by the train_size ablation group.
DESK_TRAIN_SIZES = (8, 16, 24, 32)

# Warm-start fine-tuning schedule: 8 pairs, 1000 iterations, lr / 5 every 600.
FINE_TUNE_ITERS = 1000
FINE_TUNE_DECAY_EVERY = 600
FINE_TUNE_PAIRS = 8
