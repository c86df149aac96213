use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sfpn_core::io::weights::read_weight_store;
use sfpn_core::io::{decode_image, load_manifest, preprocess_test, read_embeddings, write_embeddings, Manifest, RowEmbedding};
use sfpn_core::metrics::{write_det_csv, EvalReport, ReportMetadata};
use sfpn_core::training::{fit, gradcheck_with_step, toy_dataset, toy_network, toy_train_config, TOY_IMAGE_SIZE};
use sfpn_core::verification::{build_templates, gen_cross_pose_scores, gen_same_pose_scores, write_scores_csv, EmbeddingRecord, ScoreSet};
use sfpn_core::{count_params, Error, Init, Network, NetworkConfig, ParamScope, Tensor, Variant};

use crate::{Command, DataArgs, Failure, NetArgs, ProtocolArg};

pub const TOY_BATCH: usize = sfpn_core::training::TOY_BATCH_SIZE;
const DEFAULT_CLASSES: usize = 8631;

type Outcome = Result<(), Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Describe { net } => describe(&net),
        Command::CountParams { net, scope } => {
            let cfg = net_config(&net)?;
            match scope {
                Some(s) => println!("{}", count_params(&cfg, s.into())),
                None => {
                    println!("variant\t{}", cfg.variant().as_str());
                    println!("backbone\t{}", count_params(&cfg, ParamScope::Backbone));
                    println!("full\t{}", count_params(&cfg, ParamScope::Full));
                }
            }
            Ok(())
        }
        Command::Extract {
            net,
            data,
            out,
            batch_size,
        } => {
            let network = build_network(&net)?;
            let rows = selected_rows(&data)?;
            let embeddings = extract(&network, &rows, batch_size)?;
            write_embeddings(&out, &embeddings)?;
            eprintln!("wrote {} embeddings to {}", embeddings.len(), out.display());
            Ok(())
        }
        Command::Enroll {
            data,
            embeddings,
            template_size,
            out,
        } => {
            let rows = selected_rows(&data)?;
            rows.manifest.check_complete()?;
            let records = records_from_file(&rows, &embeddings)?;
            let set = build_templates(&records, template_size)?;
            write_templates(&out, set.templates())?;
            eprintln!("wrote {} templates to {}", set.templates().len(), out.display());
            Ok(())
        }
        Command::Evaluate {
            net,
            data,
            embeddings,
            template_size,
            protocol,
            far_target,
            out,
        } => evaluate(&net, &data, embeddings.as_deref(), template_size, protocol, far_target, &out),
        Command::TrainToy {
            variant,
            seed,
            classes,
            per_class,
            epochs,
            batch_size,
            out,
            weights_out,
        } => {
            let data = toy_dataset(classes, per_class, TOY_IMAGE_SIZE, seed)?;
            let mut network = toy_network(NetworkConfig::new(variant, classes), seed)?;
            let mut config = toy_train_config(seed);
            config.epochs = epochs;
            config.batch_size = batch_size;
            let log = fit(&mut network, &data, &config)?;
            for e in &log.epochs {
                println!(
                    "epoch {:>2}  lr {:<7} train_loss {:.4}  train_acc {:.4}  val_loss {:.4}",
                    e.epoch, e.lr, e.train_loss, e.train_accuracy, e.val_loss
                );
            }
            for t in &log.transitions {
                println!("lr {} -> {} after epoch {}", t.from_lr, t.to_lr, t.after_epoch);
            }
            if let Some(path) = out {
                fs::write(&path, log.to_jsonl()).map_err(|e| io_err(&path, e))?;
            }
            if let Some(path) = weights_out {
                sfpn_core::io::save_weights(&network, &path)?;
            }
            Ok(())
        }
        Command::Gradcheck {
            variant,
            seed,
            step,
            tolerance,
            out,
        } => {
            let report = gradcheck_with_step(&NetworkConfig::tiny(variant), seed, step)?;
            for g in &report.groups {
                println!("{:<40} {:>7} {:.3e}", g.name, g.len, g.rel_error);
            }
            println!("max relative error {:.3e} (tolerance {tolerance:.0e})", report.max_rel_error);
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.to_string()))?;
                fs::write(&path, json).map_err(|e| io_err(&path, e))?;
            }
            if report.max_rel_error < tolerance {
                Ok(())
            } else {
                Err(Failure::Internal(format!(
                    "gradient check failed: {:.3e} >= {tolerance:.0e}",
                    report.max_rel_error
                )))
            }
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Failure {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

fn net_config(args: &NetArgs) -> Result<NetworkConfig, Failure> {
    if let Some(path) = &args.weights {
        let store = read_weight_store(path)?;
        let variant = args.variant.unwrap_or(Variant::from_flags(store.use_dwc, store.use_gdc));
        return Ok(NetworkConfig::new(variant, args.classes.unwrap_or(store.num_classes)));
    }
    let cfg = NetworkConfig::new(args.variant.unwrap_or(Variant::Base), args.classes.unwrap_or(DEFAULT_CLASSES));
    cfg.validate()?;
    Ok(cfg)
}

fn build_network(args: &NetArgs) -> Result<Network, Failure> {
    let cfg = net_config(args)?;
    let init = match &args.weights {
        Some(path) => Init::Weights(read_weight_store(path)?),
        None => Init::Random { seed: args.seed },
    };
    Ok(Network::build(cfg, init)?)
}

fn describe(args: &NetArgs) -> Outcome {
    let cfg = net_config(args)?;
    println!(
        "{} ({} classes, input {}²×{})",
        cfg.variant().as_str(),
        cfg.num_classes,
        cfg.input_size,
        cfg.input_channels
    );
    for row in cfg.shape_trace()? {
        println!("{row}");
    }
    Ok(())
}

/// Manifest rows kept after `--limit-subjects`, with their original row numbers.
struct Rows {
    manifest: Manifest,
    original: Vec<usize>,
    image_index: Vec<usize>,
    root: PathBuf,
}

fn selected_rows(args: &DataArgs) -> Result<Rows, Failure> {
    let full = load_manifest(&args.manifest)?;
    let keep: HashSet<String> = match args.limit_subjects {
        Some(n) => full.subjects().into_iter().take(n).map(str::to_owned).collect(),
        None => full.entries.iter().map(|e| e.subject_id.clone()).collect(),
    };
    let indices = full.image_indices();
    let mut manifest = Manifest::default();
    let (mut original, mut image_index) = (Vec::new(), Vec::new());
    for (row, entry) in full.entries.iter().enumerate() {
        if keep.contains(&entry.subject_id) {
            manifest.entries.push(entry.clone());
            original.push(row);
            image_index.push(indices[row]);
        }
    }
    let root = match &args.image_root {
        Some(r) => r.clone(),
        None => args.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    Ok(Rows {
        manifest,
        original,
        image_index,
        root,
    })
}

fn extract(net: &Network, rows: &Rows, batch_size: usize) -> Result<Vec<RowEmbedding>, Failure> {
    let positions: Vec<usize> = (0..rows.manifest.len()).collect();
    let mut out = Vec::with_capacity(positions.len());
    for chunk in positions.chunks(batch_size.max(1)) {
        let tensors = chunk
            .par_iter()
            .map(|&i| preprocess_test(&decode_image(&rows.manifest.resolve(i, &rows.root))?))
            .collect::<Result<Vec<Tensor>, Error>>()?;
        let batch = Tensor::stack(&tensors)?;
        for (&i, embedding) in chunk.iter().zip(net.embed(&batch)?) {
            out.push(RowEmbedding {
                row: rows.original[i],
                embedding,
            });
        }
    }
    Ok(out)
}

fn to_records(rows: &Rows, embeddings: Vec<RowEmbedding>) -> Result<Vec<EmbeddingRecord>, Failure> {
    let mut by_row: HashMap<usize, _> = embeddings.into_iter().map(|r| (r.row, r.embedding)).collect();
    rows.manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let row = rows.original[i];
            let embedding = by_row
                .remove(&row)
                .ok_or_else(|| Failure::from(Error::Lookup(format!("embedding for manifest row {row}"))))?;
            Ok(EmbeddingRecord {
                subject_id: entry.subject_id.clone(),
                pose: entry.pose,
                image_index: rows.image_index[i],
                embedding,
            })
        })
        .collect()
}

fn records_from_file(rows: &Rows, path: &Path) -> Result<Vec<EmbeddingRecord>, Failure> {
    to_records(rows, read_embeddings(path)?)
}

fn write_templates(path: &Path, templates: &[sfpn_core::verification::Template]) -> Outcome {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let dim = templates.first().map_or(0, |t| t.vector.len());
    let mut header = vec!["subject_id".to_string(), "pose".into(), "template_index".into(), "size".into()];
    header.extend((0..dim).map(|k| format!("e{k}")));
    let csv_err = |e: csv::Error| Failure::from(Error::Output(e.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for t in templates {
        let mut rec = vec![t.subject_id.clone(), t.pose.as_str().into(), t.template_index.to_string(), t.size.to_string()];
        rec.extend(t.vector.iter().map(f32::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn set_stem(set: &ScoreSet) -> String {
    format!(
        "{}_{}-{}_t{}",
        set.protocol.as_str(),
        set.poses.0.as_str(),
        set.poses.1.as_str(),
        set.template_size
    )
}

fn evaluate(
    net: &NetArgs,
    data: &DataArgs,
    embeddings: Option<&Path>,
    template_size: usize,
    protocol: ProtocolArg,
    far_target: f64,
    out: &Path,
) -> Outcome {
    let rows = selected_rows(data)?;
    rows.manifest.check_complete()?;
    let (records, variant) = match embeddings {
        Some(path) => (records_from_file(&rows, path)?, net.variant.map(|v| v.as_str().to_string())),
        None => {
            let network = build_network(net)?;
            let variant = network.config().variant().as_str().to_string();
            (to_records(&rows, extract(&network, &rows, 16)?)?, Some(variant))
        }
    };
    let mut sets = Vec::new();
    if protocol != ProtocolArg::CrossPose {
        sets.extend(gen_same_pose_scores(&records, template_size)?);
    }
    if protocol != ProtocolArg::SamePose {
        sets.extend(gen_cross_pose_scores(&records, template_size)?);
    }
    let subjects = rows.manifest.subjects().len();
    let report = EvalReport::from_score_sets(ReportMetadata::new(variant, template_size, far_target, subjects), &sets)?;

    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    for (set, combo) in sets.iter().zip(&report.combinations) {
        let stem = set_stem(set);
        let path = out.join(format!("scores_{stem}.csv"));
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        write_scores_csv(BufWriter::new(file), set)?;
        let path = out.join(format!("det_{stem}.csv"));
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        write_det_csv(BufWriter::new(file), &combo.det)?;
    }
    let path = out.join("report.json");
    fs::write(&path, report.to_json()).map_err(|e| io_err(&path, e))?;

    println!("{subjects} subjects, template size {template_size}, FRR at FAR {far_target}");
    println!("{:<11} {:<6} {:>8} {:>9} {:>8} {:>10}", "protocol", "combo", "genuine", "impostor", "EER", "FRR@FAR");
    for (set, c) in sets.iter().zip(&report.combinations) {
        println!(
            "{:<11} {:<6} {:>8} {:>9} {:>8.4} {:>10.4}",
            set.protocol.as_str(),
            set.combination(),
            c.genuine_count,
            c.impostor_count,
            c.eer,
            c.frr_at_far
        );
    }
    Ok(())
}
