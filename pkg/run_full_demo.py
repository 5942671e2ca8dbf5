"""
Complete Tissue Graph Pipeline Demo

Runs the whole chain on the synthetic benchmark:
- synthetic slides with planted stage signal
- tissue mask, superpixels, region graph, embedding-guided coarsening
- 188-feature extraction and correlation pruning
- GAT random search with repeated instances
- test metrics and Integrated Gradients explanations
- a small merge-threshold sweep served from the stage cache
"""

import json
import os
from dataclasses import replace

from dotenv import load_dotenv

from src.core.config import load_config
from src.evaluation.manifest import load_manifest
from src.pipeline.runner import run_pipeline
from src.pipeline.sweep import sweep
from src.pipeline.synth import benchmark_config, write_synthetic_benchmark


def print_section(title):
    """Print section header"""
    print(f"\n{'=' * 80}")
    print(f"{title:^80}")
    print(f"{'=' * 80}\n")


def print_result(success, message):
    """Print result with status"""
    status = "✓" if success else "✗"
    print(f"{status} {message}")


def main():
    load_dotenv()

    demo_dir = os.getenv("DEMO_DIR", "demo_output")
    n_slides = int(os.getenv("DEMO_SLIDES", "40"))

    print_section("Tissue Region Graph Pipeline - Full Demo")

    # 1. Synthetic benchmark
    print("1. Synthetic benchmark...")
    manifest_path = write_synthetic_benchmark(os.path.join(demo_dir, "bench"), n_slides=n_slides, seed=0, size=96)
    manifest = load_manifest(manifest_path)
    print_result(True, f"{len(manifest)} slides, {len(manifest.patients())} patients -> {manifest_path}")

    config = benchmark_config(os.path.abspath(os.path.join(demo_dir, "out")), load_config())
    config = replace(config, train=replace(config.train, epochs=20))

    # 2. Full pipeline
    print_section("DEMO 1: Slides -> graphs -> features -> GAT")
    result = run_pipeline(manifest, config)
    summary = result.summary
    print_result(not result.failures, f"Run directory: {result.run_dir}")
    for slide in summary["slides"][:5]:
        print(
            f"   - {slide['slide_id']} ({slide['split']}): "
            f"{slide['initial_nodes']} regions -> {slide['nodes']} nodes, {slide['edges']} edges"
        )
    if len(summary["slides"]) > 5:
        print(f"   ... {len(summary['slides']) - 5} more")
    print(f"\nActive features after pruning: {summary.get('active_features')}")

    training = summary.get("training") or {}
    if training.get("skipped"):
        print_result(False, "Training skipped (train or val split without labels)")
    elif training:
        print(f"Best trial: {training['best_trial']} (lr={training['lr']:.2e}, wd={training['weight_decay']:.2e})")
        for name, stat in (summary.get("metrics") or {}).items():
            print(f"  - {name}: {stat['mean']:.2f} ± {stat['std']:.2f}")

    # 3. Explanation
    print_section("DEMO 2: Integrated Gradients")
    explanations = os.path.join(result.run_dir, "explanations")
    slides = sorted(os.listdir(explanations)) if os.path.isdir(explanations) else []
    if slides:
        with open(os.path.join(explanations, slides[0], "explanation.json"), "r", encoding="utf-8") as handle:
            report = json.load(handle)
        print(f"Slide {report['slide_id']}, target class {report['target_class']}")
        print(f"Completeness gap: {report['completeness_gap']:.2e}")
        for feature in report["top_features"][:5]:
            print(
                f"  - {feature['name']}: attribution {feature['attribution']:+.4f}, "
                f"node {feature['node_id']}, percentile {feature['percentile']}"
            )
        print_result(True, f"Overlay: {os.path.join(explanations, slides[0], 'overlay.png')}")
    else:
        print_result(False, "No explanations written")

    # 4. Sweep
    print_section("DEMO 3: Merge threshold sweep")
    swept = sweep(manifest, config, "tau", [0.8, 0.95])
    print(swept.table())
    last = swept.runs[-1]
    with open(os.path.join(last.run_dir, "cache_report.json"), "r", encoding="utf-8") as handle:
        report = json.load(handle)
    for stage, counts in report.items():
        print(f"  - {stage}: {counts['hits']} hits, {counts['misses']} misses")

    print_section("Demo Complete")
    print("Next steps:")
    print("  1. python -m src.cli synth --out-dir bench")
    print("  2. python -m src.cli --config bench/config.json run --manifest bench/manifest.csv")
    print("  3. Review docs/QUICK_START.md and docs/FILE_FORMATS.md")
    print()


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        print("\n\nDemo interrupted by user.")
    except Exception as e:
        print(f"\n\nError: {str(e)}")
        import traceback
        traceback.print_exc()
