from .config import (CAR_PROFILE, PEDESTRIAN_PROFILE, PROFILES, ClassProfile,
                     LossConfig, Stage1Config, Stage2Config, TrainConfig,
                     preset)
from .losses import (BoxHeadOutput, bin_loss, box_loss, confidence_loss,
                     cross_entropy, decode_theta, encode_theta, seg_loss,
                     smooth_l1)
from .proposals import (EmptyProposalError, ca_nms, crop_cuboid, crop_proposal,
                        generate_proposals, oriented_nms, resample_rows)
from .stage1 import Stage1Net, resample_points
from .stage2 import Stage2Net
from .augment import SceneSample, augment_proposal, augment_scene
from .train import (LossLog, build_stage2_pool, load_checkpoint,
                    save_checkpoint, train_stage1, train_stage2)
from .inference import (NoPointsError, active_annotate, candidate_grid,
                        infer_scene, predict_cuboid)
