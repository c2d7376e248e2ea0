"""Multi-multi-instance learning: nested bags, bag-layer networks, and rule
surrogates."""

try:
    # Installed wheel: the extension lives inside the package.
    from ._mmil import (  # noqa: F401
        Dataset,
        Model,
        Surrogate,
        TrainResult,
        accuracy,
        explain,
        fidelity,
        graphs_to_dataset,
        init_network,
        load_dataset,
        load_explainer,
        load_model,
        make_dataset,
        map_region,
        predict,
        rules_text,
        synth,
        trace,
        train,
    )
except ImportError:
    # Development tree: the extension sits on sys.path next to the build.
    from _mmil import (  # noqa: F401
        Dataset,
        Model,
        Surrogate,
        TrainResult,
        accuracy,
        explain,
        fidelity,
        graphs_to_dataset,
        init_network,
        load_dataset,
        load_explainer,
        load_model,
        make_dataset,
        map_region,
        predict,
        rules_text,
        synth,
        trace,
        train,
    )

__all__ = [
    "Dataset",
    "Model",
    "Surrogate",
    "TrainResult",
    "accuracy",
    "explain",
    "fidelity",
    "graphs_to_dataset",
    "init_network",
    "load_dataset",
    "load_explainer",
    "load_model",
    "make_dataset",
    "map_region",
    "predict",
    "rules_text",
    "synth",
    "trace",
    "train",
]
