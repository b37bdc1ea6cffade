from .base import BasePipeline, PipelineResult
from .snell import SnellPipeline
from .rbsde import RbsdePipeline
from .drbsde import DrbsdePipeline
from .enumerate import EnumeratePipeline
from .registry import PipelineRegistry


def default_registry() -> PipelineRegistry:
    """Registry holding the four CLI tasks."""
    registry = PipelineRegistry()
    for pipeline_cls in (SnellPipeline, RbsdePipeline, DrbsdePipeline, EnumeratePipeline):
        registry.register(pipeline_cls)
    return registry


__all__ = [
    'BasePipeline', 'PipelineResult', 'SnellPipeline', 'RbsdePipeline', 'DrbsdePipeline',
    'EnumeratePipeline', 'PipelineRegistry', 'default_registry',
]
