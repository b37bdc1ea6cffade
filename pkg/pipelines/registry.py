"""
Pipeline registry for the CLI tasks.

The registry maps task names to pipeline classes so `run --task` can resolve
a task without knowing the concrete pipelines.
"""

from pathlib import Path
from typing import Dict, List, Optional, Type, Union

from .base import BasePipeline
from utils import get_logger

logger = get_logger(__name__)


class PipelineRegistry:
    """
    Central registry of task pipelines.

    Example:
        registry = PipelineRegistry()
        registry.register(SnellPipeline)
        pipeline = registry.create('snell', out_dir='out/worked')
        pipeline.run(scenario)
    """

    def __init__(self):
        """Initialize an empty registry."""
        self.pipelines: Dict[str, Type[BasePipeline]] = {}

    def register(self, pipeline_cls: Type[BasePipeline]) -> None:
        """
        Register a pipeline class under its task name.

        Raises:
            ValueError: If the task is already registered
        """
        if pipeline_cls.task in self.pipelines:
            raise ValueError(f"Pipeline for task '{pipeline_cls.task}' already registered")
        self.pipelines[pipeline_cls.task] = pipeline_cls
        logger.debug(f"Registered pipeline: {pipeline_cls.__name__} (task: {pipeline_cls.task})")

    def unregister(self, task: str) -> None:
        if task in self.pipelines:
            del self.pipelines[task]
            logger.debug(f"Unregistered pipeline: {task}")

    def list_tasks(self) -> List[str]:
        return list(self.pipelines.keys())

    def create(self, task: str, out_dir: Optional[Union[str, Path]] = None) -> BasePipeline:
        """
        Instantiate the pipeline for a task.

        Raises:
            KeyError: If no pipeline is registered for the task
        """
        if task not in self.pipelines:
            raise KeyError(f"Unknown task '{task}'; known: {', '.join(self.list_tasks())}")
        return self.pipelines[task](out_dir)
