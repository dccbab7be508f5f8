# synthetic.py - Clustered Synthetic Embeddings on the Unit Sphere
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from sklearn.preprocessing import normalize as l2_normalize

from .dataset import Dataset, DemographicScheme, EmbeddingRecord, IdentityInfo, group_label

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Parameters of the synthetic embedding generator.

    Dispersions are relative magnitudes: every perturbation is an isotropic
    Gaussian with unit expected norm, scaled by the sigma and added to the
    parent center before projecting back onto the unit sphere.

    Args:
        scheme (DemographicScheme): attributes whose cartesian product gives the groups
        identities_per_group (int): identities generated for each group
        images_per_identity (int): images generated for each identity
        dim (int): embedding dimension e (at least 2)
        seed (int): generator seed
        sigma_group (float): spread of group centers around a shared base direction
        sigma_id (float): spread of identity centers around their group center
        sigma_img (float): per-image noise around the identity center (0 allowed)
        sigma_id_by_group (dict): group label -> sigma_id override
        sigma_long (float, optional): extra noise of a long-range copy of each image
    """
    scheme: DemographicScheme
    identities_per_group: int = 20
    images_per_identity: int = 10
    dim: int = 64
    seed: int = 0
    sigma_group: float = 0.5
    sigma_id: float = 0.5
    sigma_img: float = 0.1
    sigma_id_by_group: Mapping[str, float] = field(default_factory=dict)
    sigma_long: Optional[float] = None

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be at least 2, got {self.dim}")
        if self.identities_per_group < 1 or self.images_per_identity < 1:
            raise ValueError("identities_per_group and images_per_identity must be positive")
        if self.sigma_group <= 0:
            raise ValueError(f"sigma_group must be positive, got {self.sigma_group}")
        if self.sigma_id <= 0:
            raise ValueError(f"sigma_id must be positive, got {self.sigma_id}")
        if self.sigma_img < 0:
            raise ValueError(f"sigma_img must be non-negative, got {self.sigma_img}")
        if self.sigma_long is not None and self.sigma_long <= 0:
            raise ValueError(f"sigma_long must be positive when set, got {self.sigma_long}")
        labels = set(self.scheme.labels())
        for label, sigma in self.sigma_id_by_group.items():
            if label not in labels:
                raise ValueError(f"sigma_id_by_group names unknown group '{label}'")
            if sigma <= 0:
                raise ValueError(f"sigma_id for group '{label}' must be positive, got {sigma}")

    def sigma_id_for(self, label):
        return self.sigma_id_by_group.get(label, self.sigma_id)

    @classmethod
    def from_dict(cls, data, scheme):
        """Build a spec from a config mapping (scheme given separately)."""
        known = {
            "identities_per_group", "images_per_identity", "dim", "seed", "sigma_group",
            "sigma_id", "sigma_img", "sigma_id_by_group", "sigma_long",
        }
        unknown = set(data) - known - {"scheme"}
        if unknown:
            raise ValueError(f"Unknown synthetic settings: {sorted(unknown)}")
        return cls(scheme=scheme, **{key: value for key, value in data.items() if key in known})


def _perturb(rng, centers, sigma, dim):
    """normalize(center + sigma * g) with g ~ N(0, I / dim) per row."""
    noise = rng.standard_normal(centers.shape) / np.sqrt(dim)
    return l2_normalize(centers + sigma * noise, norm="l2")


def generate_synthetic(spec):
    """
    Generate a deterministic clustered embedding dataset.

    Each group gets a unit center scattered around a shared base direction,
    each identity a center scattered around its group's, and each image a
    vector scattered around its identity's. A smaller sigma_id makes a group's
    identities mutually closer.

    Args:
        spec (SyntheticSpec): generator parameters

    Returns:
        Dataset: normalized dataset; ids follow 'g<group>-i<identity>-img<image>'
    """
    rng = np.random.default_rng(spec.seed)
    dim = spec.dim

    base = l2_normalize(rng.standard_normal((1, dim)), norm="l2")
    groups = spec.scheme.groups()
    group_centers = _perturb(rng, np.repeat(base, len(groups), axis=0), spec.sigma_group, dim)

    identities = {}
    image_ids, identity_ids, range_tags, blocks = [], [], [], []
    for g, group in enumerate(groups):
        label = group_label(group)
        centers = np.repeat(group_centers[g:g + 1], spec.identities_per_group, axis=0)
        identity_centers = _perturb(rng, centers, spec.sigma_id_for(label), dim)

        for i in range(spec.identities_per_group):
            identity_id = f"g{g}-i{i:05d}"
            identities[identity_id] = IdentityInfo(identity_id, tuple(group))

            repeated = np.repeat(identity_centers[i:i + 1], spec.images_per_identity, axis=0)
            if spec.sigma_img > 0:
                images = _perturb(rng, repeated, spec.sigma_img, dim)
            else:
                images = repeated
            names = [f"{identity_id}-img{t:03d}" for t in range(spec.images_per_identity)]

            blocks.append(images)
            image_ids.extend(names)
            identity_ids.extend([identity_id] * len(names))
            range_tags.extend(["close"] * len(names))

            if spec.sigma_long is not None:
                blocks.append(_perturb(rng, images, spec.sigma_long, dim))
                image_ids.extend(f"{name}-long" for name in names)
                identity_ids.extend([identity_id] * len(names))
                range_tags.extend(["long"] * len(names))

    matrix = np.vstack(blocks)
    matrix.setflags(write=False)
    records = tuple(
        EmbeddingRecord(image_id, identity_id, matrix[row], range_tag)
        for row, (image_id, identity_id, range_tag) in enumerate(zip(image_ids, identity_ids, range_tags))
    )
    logger.info(
        f"Generated {len(records)} synthetic records for {len(identities)} identities "
        f"in {len(groups)} groups (dim={dim}, seed={spec.seed})"
    )
    return Dataset(spec.scheme, identities, records, dim, normalized=True)
