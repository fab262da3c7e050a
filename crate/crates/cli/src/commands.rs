use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vcrank::bias::{bias_report, CountUnit};
use vcrank::capmetrics::{
    avg_ref_similarity, bleu, cider_d, corpus_diversity, corpus_mbleu, rouge_l, CiderItem,
};
use vcrank::corpus::{
    load_candidates, load_corpus, load_embeddings, load_jsonl, load_relatedness, write_jsonl,
};
use vcrank::dataset_builder::{
    build_overlap_dataset, build_relatedness_dataset, context_frequency, retained_contexts,
    BuilderConfig,
};
use vcrank::relatedness_model::{train, CnnConfig, CnnParams, SequenceInput};
use vcrank::reranker::{rerank, CaptionScorer, CnnScorer, CosineScorer, SimProbScorer};
use vcrank::scorer::{join_labels, ContextJoin, RelatednessScore, ScoreMode};
use vcrank::textnorm::default_gender_lexicon;
use vcrank::toy_embedder::embed_text;
use vcrank::vcsearch::{build_index, index_from_table, search_by_context};
use vcrank::{tokenize, Detection, Embeddings, Error, GenderLexicon, ImageRecord, Result, TokenSeq};

use crate::args::*;

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::BuildDataset(a) => build_dataset(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Rerank(a) => rerank_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Bias(a) => bias(a),
        Command::Search(a) => search(a),
        Command::EmbedToy(a) => embed_toy(a, cli.seed),
    }
}

fn builder_config(c: &ContextArgs, thresholds: Vec<f64>) -> Result<BuilderConfig> {
    let cfg = BuilderConfig {
        confidence_threshold: c.confidence_threshold,
        top_k_contexts: c.top_k,
        dedup_threshold: c.dedup_threshold,
        label_thresholds: thresholds,
        context_join: match c.context_join {
            JoinArg::Concatenated => ContextJoin::Concatenated,
            JoinArg::PerObject => ContextJoin::PerObject,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn lexicon(path: Option<&Path>) -> Result<GenderLexicon> {
    match path {
        Some(p) => GenderLexicon::load(p),
        None => Ok(default_gender_lexicon()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn build_dataset(a: &BuildDatasetArgs) -> Result<()> {
    if a.thresholds.is_empty() {
        return Err(Error::invalid("--thresholds needs at least one value"));
    }
    let cfg = builder_config(&a.context, a.thresholds.clone())?;
    let corpus = load_corpus(&a.corpus)?;
    let emb: Embeddings = load_embeddings(&a.embeddings, None)?;
    let built = build_relatedness_dataset(&corpus, &emb, &cfg)?;
    write_jsonl(&a.out, &built.records)?;
    if !built.skipped.is_empty() {
        log::info!("{} image(s) had no usable visual context", built.skipped.len());
    }
    for (th, total, pos) in built.counts_per_threshold() {
        println!("threshold {th}: {total} records, {pos} positive, {} negative", total - pos);
    }
    if let Some(p) = &a.overlap_out {
        let overlap = build_overlap_dataset(&corpus, &cfg)?;
        write_jsonl(p, &overlap)?;
        println!("overlap: {} records", overlap.len());
    }
    if let Some(p) = &a.stats_out {
        let lowest = cfg.sorted_thresholds()[0];
        let freq = context_frequency(
            built
                .records
                .iter()
                .filter(|r| r.threshold == lowest && r.label == 1),
        );
        write_jsonl(p, &freq)?;
    }
    Ok(())
}

fn stats(a: &StatsArgs) -> Result<()> {
    let records = load_relatedness(&a.dataset)?;
    let freq = match a.threshold {
        Some(th) => context_frequency(records.iter().filter(|r| r.threshold == th && r.label == 1)),
        None => {
            // one count per distinct pair, however many thresholds were emitted
            let mut seen = HashSet::new();
            context_frequency(
                records
                    .iter()
                    .filter(|r| seen.insert((r.caption.as_str(), r.context.as_str()))),
            )
        }
    };
    write_jsonl(&a.out, &freq)?;
    println!("{} distinct context labels", freq.len());
    for lc in freq.iter().take(10) {
        println!("{:>8}  {}", lc.count, lc.label);
    }
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    let records = load_relatedness(&a.dataset)?;
    let mut thresholds: Vec<f64> = records.iter().map(|r| r.threshold).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let th = match (a.threshold, thresholds.as_slice()) {
        (Some(t), _) => t,
        (None, [t]) => *t,
        (None, []) => return Err(Error::invalid("dataset is empty")),
        (None, _) => {
            return Err(Error::invalid(format!(
                "dataset has thresholds {thresholds:?}; pick one with --threshold"
            )))
        }
    };
    let emb: Embeddings = load_embeddings(&a.embeddings, None)?;
    let data: Vec<(SequenceInput<f64>, u8)> = records
        .iter()
        .filter(|r| r.threshold == th)
        .map(|r| Ok((SequenceInput::from_texts(&r.context, &r.caption, &emb)?, r.label)))
        .collect::<Result<_>>()?;
    if data.is_empty() {
        return Err(Error::invalid(format!("no records at threshold {th}")));
    }
    let cfg = CnnConfig {
        embed_dim: emb.dim(),
        windows: a.windows.clone(),
        num_kernels: a.kernels,
        seed,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
    };
    let positives = data.iter().filter(|(_, y)| *y == 1).count();
    log::info!("training on {} examples ({positives} positive)", data.len());
    let outcome = train(&data, &cfg)?;
    outcome.params.save(&a.out)?;
    if let Some(p) = &a.loss_log {
        write_jsonl(p, &outcome.log)?;
    }
    let last = outcome.log.last().expect("log starts with the initial entry");
    println!(
        "trained {} examples: loss {:.6} -> {:.6}, accuracy {:.4}",
        data.len(),
        outcome.initial_loss(),
        last.loss,
        last.accuracy
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RankedText {
    text: String,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RerankedLine {
    image_id: String,
    ranking: Vec<RankedText>,
}

fn rerank_cmd(a: &RerankArgs) -> Result<()> {
    let cfg = builder_config(&a.context, vec![])?;
    let sets = load_candidates(&a.candidates)?;
    let corpus = load_corpus(&a.corpus)?;
    let by_id: HashMap<&str, &ImageRecord> = corpus.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let emb: Embeddings = load_embeddings(&a.embeddings, None)?;
    let lex = if a.neutralize {
        Some(lexicon(a.lexicon.as_deref())?)
    } else {
        None
    };
    let params: Option<CnnParams<f64>> = match (a.scorer, &a.weights) {
        (ScorerArg::Cnn, Some(w)) => Some(CnnParams::load(w)?),
        (ScorerArg::Cnn, None) => return Err(Error::invalid("--scorer cnn needs --weights")),
        _ => None,
    };
    let scorer: Box<dyn CaptionScorer<f64>> = match a.scorer {
        ScorerArg::Simprob => Box::new(SimProbScorer {
            emb: &emb,
            join: cfg.context_join,
        }),
        ScorerArg::Cosine => Box::new(CosineScorer {
            emb: &emb,
            join: cfg.context_join,
        }),
        ScorerArg::Cnn => Box::new(CnnScorer {
            params: params.as_ref().expect("loaded above"),
            emb: &emb,
        }),
    };
    // without any visual context every candidate ties and the baseline order stands
    let no_context = |_: &str, _: &[Detection]| RelatednessScore::new(0.0, ScoreMode::CosineClamped);

    let mut out = Vec::with_capacity(sets.len());
    for set in &sets {
        let image = by_id.get(set.image_id.as_str()).ok_or_else(|| {
            Error::invalid(format!("image {:?} has candidates but is not in the corpus", set.image_id))
        })?;
        let contexts = retained_contexts(image, &emb, &cfg)?;
        let ranked = if contexts.is_empty() {
            log::warn!("image {:?}: no visual context survives filtering; keeping baseline order", set.image_id);
            rerank(set, &contexts, &no_context, None)?
        } else {
            rerank(set, &contexts, scorer.as_ref(), lex.as_ref())?
        };
        out.push(RerankedLine {
            image_id: set.image_id.clone(),
            ranking: ranked
                .into_iter()
                .map(|r| RankedText {
                    text: r.candidate.text,
                    score: r.score.value(),
                })
                .collect(),
        });
    }
    write_jsonl(&a.out, &out)?;
    println!("re-ranked {} candidate sets", out.len());
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let reranked: Vec<RerankedLine> = load_jsonl(&a.reranked)?;
    let corpus = load_corpus(&a.corpus)?;
    let by_id: HashMap<&str, &ImageRecord> = corpus.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let emb: Option<Embeddings> = a
        .embeddings
        .as_ref()
        .map(|p| load_embeddings(p, None))
        .transpose()?;

    let mut items: Vec<(String, &ImageRecord)> = Vec::new();
    for line in &reranked {
        let top = line
            .ranking
            .first()
            .ok_or_else(|| Error::invalid(format!("image {:?} has an empty ranking", line.image_id)))?;
        let image = by_id
            .get(line.image_id.as_str())
            .ok_or_else(|| Error::invalid(format!("image {:?} is not in the corpus", line.image_id)))?;
        items.push((top.text.clone(), image));
    }
    if items.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }

    let cider_items: Vec<CiderItem> = items
        .iter()
        .map(|(c, img)| CiderItem {
            candidate: tokenize(c),
            references: img.human_captions.iter().map(|r| tokenize(r)).collect(),
        })
        .collect();
    let n = items.len() as f64;
    let mut metrics: BTreeMap<&str, f64> = BTreeMap::new();
    for (name, order) in [("bleu1", 1), ("bleu2", 2), ("bleu3", 3), ("bleu4", 4)] {
        let mut sum = 0.0;
        for it in &cider_items {
            sum += bleu(&it.candidate, &it.references, order)?;
        }
        metrics.insert(name, sum / n);
    }
    let mut rouge = 0.0;
    for it in &cider_items {
        rouge += rouge_l(&it.candidate, &it.references)?;
    }
    metrics.insert("rouge_l", rouge / n);
    if cider_items.len() >= 2 {
        metrics.insert("cider_d", cider_d(&cider_items)?.mean);
    } else {
        log::warn!("CIDEr-D needs at least two images; omitted");
    }
    let pairs: Vec<(TokenSeq, Vec<TokenSeq>)> = cider_items
        .iter()
        .map(|it| (it.candidate.clone(), it.references.clone()))
        .collect();
    metrics.insert("mbleu", corpus_mbleu(&pairs)?);
    let captions: Vec<TokenSeq> = cider_items.iter().map(|it| it.candidate.clone()).collect();
    let div = corpus_diversity(&captions)?;
    metrics.insert("div1", div.mean_div1);
    metrics.insert("div2", div.mean_div2);
    metrics.insert("uniq", div.mean_uniq_per_caption);
    metrics.insert("vocab", div.vocab_size as f64);
    if let Some(emb) = &emb {
        let mut sum = 0.0;
        for (cand, img) in &items {
            let refs: Vec<Vec<f64>> = img
                .human_captions
                .iter()
                .map(|r| emb.require(r).map(<[f64]>::to_vec))
                .collect::<Result<_>>()?;
            sum += avg_ref_similarity(emb.require(cand)?, &refs)?;
        }
        metrics.insert("sb", sum / n);
    }
    write_json(&a.out, &metrics)?;
    for (k, v) in &metrics {
        println!("{k:>8}  {v:.4}");
    }
    Ok(())
}

fn bias(a: &BiasArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let lex = lexicon(a.lexicon.as_deref())?;
    let unit = match a.unit {
        UnitArg::Caption => CountUnit::Caption,
        UnitArg::Image => CountUnit::Image,
    };
    let rows = bias_report(&corpus, &a.objects, &lex, unit);
    let width = a.objects.iter().map(String::len).max().unwrap_or(0).max(6);
    println!("{:<width$} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}", "object", "+person", "+man", "+woman", "m", "w", "to-m");
    for r in &rows {
        let [m, w, to_m] = r.display();
        println!(
            "{:<width$} {:>8} {:>8} {:>8} {m:>6} {w:>6} {to_m:>6}",
            r.object, r.person, r.man, r.woman
        );
    }
    if let Some(p) = &a.out {
        write_jsonl(p, &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SearchLine<'a> {
    rank: usize,
    id: &'a str,
    score: f64,
}

fn search(a: &SearchArgs) -> Result<()> {
    let emb: Embeddings = load_embeddings(&a.embeddings, None)?;
    let index = match &a.corpus {
        None => index_from_table(&emb)?,
        Some(p) => {
            let corpus = load_corpus(p)?;
            let mut entries = Vec::new();
            for img in &corpus {
                for (i, c) in img.human_captions.iter().enumerate() {
                    entries.push((format!("{}#{i}", img.image_id), emb.require(c)?.to_vec()));
                }
            }
            build_index(entries)?
        }
    };
    let hits = search_by_context(&index, &a.contexts, &emb, a.k)?;
    let lines: Vec<SearchLine> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| SearchLine {
            rank: i + 1,
            id: &h.id,
            score: h.score,
        })
        .collect();
    match &a.out {
        Some(p) => {
            write_jsonl(p, &lines)?;
            println!("{} results", lines.len());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for l in &lines {
                let s = serde_json::to_string(l).expect("plain struct serializes");
                writeln!(stdout, "{s}").map_err(|e| Error::io("<stdout>", e))?;
            }
        }
    }
    Ok(())
}

/// Insertion-ordered set of texts to embed.
#[derive(Default)]
struct TextSet {
    seen: HashSet<String>,
    texts: Vec<String>,
}

impl TextSet {
    fn add(&mut self, text: &str) {
        let t = text.trim();
        if !t.is_empty() && self.seen.insert(t.to_string()) {
            self.texts.push(t.to_string());
        }
    }
}

/// Every caption, candidate, label, retained joined context, their
/// gender-neutral forms, and every token (for the convolutional scorer).
fn embed_toy(a: &EmbedToyArgs, seed: u64) -> Result<()> {
    let cfg = builder_config(&a.context, vec![])?;
    let lex = lexicon(a.lexicon.as_deref())?;
    let corpus = match &a.corpus {
        Some(p) => load_corpus(p)?,
        None => Vec::new(),
    };
    let mut set = TextSet::default();
    for img in &corpus {
        img.human_captions.iter().for_each(|c| set.add(c));
        img.detections.iter().for_each(|d| set.add(&d.label));
    }
    if let Some(p) = &a.candidates {
        for s in load_candidates(p)? {
            s.candidates.iter().for_each(|c| set.add(&c.text));
        }
    }
    if let Some(p) = &a.texts {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        text.lines().for_each(|l| set.add(l));
    }

    let mut table = Embeddings::new(a.dim)?;
    let insert = |table: &mut Embeddings, text: &str| -> Result<()> {
        if table.contains(text) {
            return Ok(());
        }
        if tokenize(text).is_empty() {
            log::warn!("{text:?} has no tokens; not embedded");
            return Ok(());
        }
        table.insert(text, &embed_text::<f64>(text, a.dim, seed)?)
    };
    for t in &set.texts {
        insert(&mut table, t)?;
    }
    // joined contexts depend on dedup, which needs the label vectors above
    for img in &corpus {
        let retained = retained_contexts(img, &table, &cfg)?;
        if !retained.is_empty() {
            set.add(&join_labels(&retained));
        }
    }
    let originals = set.texts.clone();
    for t in &originals {
        set.add(&vcrank::reranker::neutralize_gender(t, &lex));
    }
    let texts = set.texts.clone();
    for t in &texts {
        for tok in tokenize(t).iter() {
            set.add(tok);
        }
    }
    for t in &set.texts {
        insert(&mut table, t)?;
    }
    table.write(&a.out)?;
    println!("embedded {} texts (dim {}, seed {seed})", table.len(), a.dim);
    Ok(())
}
