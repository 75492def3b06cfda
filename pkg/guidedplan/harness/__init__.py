from .vqa import (CATEGORIES, TEMPLATE_VERSION, DriveVQARecord, ReasoningVQAPrompt, ReasoningVQARecord, Responder,
                  TemplateResponder, gen_drivevqa, gen_reasoningvqa_prompts, serialize_scene, numbers_in,
                  write_responses, ingest_responses, save_records, load_drivevqa, load_reasoningvqa, load_prompts)
from .pretrain import PretrainResult, Pretrainer, pretrain, mixed_epoch, encode_pair, as_pairs
from .finetune import finetune, stratified_sample, type_quotas, type_counts
from .benchmark import (MAIN_VARIANT, BASELINE_VARIANT, BenchmarkRun, ScenarioResult, build_hard20, run_benchmark,
                        run_jobs, type_table, gate_row, source_hash)
from .report import ReportFiles, report, render_markdown, score_table, gate_table, plot_scenario
