use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ctc_rescore::corpus::synthetic::SyntheticCorpus;
use ctc_rescore::corpus::{store_corpus, Conversation, Split};
use ctc_rescore::decoder::{decode_all, greedy_decode, read_nbest, write_nbest, BeamDecoder, NBestList};
use ctc_rescore::fmt::plain_sig;
use ctc_rescore::metrics::{binned_wer, total_wer, werr, word_edit_distance, EvalPair, WerReport};
use ctc_rescore::ngram::{save_arpa, train_with, Discounting, NGramModel, PruneConfig};
use ctc_rescore::rescore::{attached_scores, interpolate, oracle_select, top_candidate};
use ctc_rescore::scorer::{evaluate_pairwise, serve_lines, NgramScorer, PairwiseEvalResult};
use ctc_rescore::taskgen::{
    gen_cnsp, gen_disambiguation, gen_pairwise_eval, read_records, write_records, NBestGroup, PairwiseSample,
};
use ctc_rescore::tuning::{grid_search_gamma, random_search_beam, BeamRanges};

use crate::config::{Prune, Unit};
use crate::manifest::hash_path;
use crate::stages::{load_nbest, parse_split, save_nbest, write_file, Artifact, Ctx, LOGIT_EXT};

const NBEST: &str = "nbest.tsv";

fn prune(p: Prune, order: usize) -> PruneConfig {
    match p {
        Prune::Singletons => PruneConfig::singletons(order),
        Prune::None => PruneConfig::none(order),
    }
}

fn references(convs: &[Conversation]) -> HashMap<String, Vec<String>> {
    convs
        .iter()
        .flat_map(|c| &c.utterances)
        .map(|u| (u.id.clone(), u.text.clone()))
        .collect()
}

/// Text of each list's selected candidate paired with its reference.
fn pairs<'a>(
    lists: &'a [NBestList],
    refs: &HashMap<String, Vec<String>>,
    pick: impl Fn(&'a NBestList) -> Result<Vec<String>>,
) -> Result<Vec<EvalPair>> {
    lists
        .iter()
        .map(|l| {
            let r = refs
                .get(&l.utterance_id)
                .with_context(|| format!("no reference for {}", l.utterance_id))?;
            Ok(EvalPair::new(r.clone(), pick(l)?))
        })
        .collect()
}

fn top_text(l: &NBestList) -> Result<Vec<String>> {
    Ok(top_candidate(l)?.text.clone())
}

/// Writes and re-reads lists so in-memory results match file-based ones.
fn roundtrip(lists: Vec<NBestList>) -> Result<Vec<NBestList>> {
    let mut buf = Vec::new();
    write_nbest(&mut buf, &lists)?;
    Ok(read_nbest(buf.as_slice())?)
}

fn decode(ctx: &Ctx, convs: &[Conversation], width: usize, weights: (f64, f64)) -> Result<Vec<NBestList>> {
    let decoder = BeamDecoder::new(ctx.beam_config(width, weights)?)?;
    let mats = ctx.logits(convs)?;
    let lists = decode_all(&decoder, &mats).into_iter().collect::<Result<Vec<_>, _>>()?;
    roundtrip(lists)
}

fn tops_file(lists: &[NBestList], pick: impl Fn(&NBestList) -> Result<Vec<String>>) -> Result<String> {
    let mut s = String::new();
    for l in lists {
        writeln!(s, "{}\t{}", l.utterance_id, pick(l)?.join(" "))?;
    }
    Ok(s)
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let corpus = SyntheticCorpus::generate(ctx.cfg.synthetic());
    let path = ctx.cfg.corpus();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    store_corpus(&path, &corpus.conversations)?;
    let logits = ctx.cfg.logits_dir();
    fs::create_dir_all(&logits)?;
    for u in corpus.conversations.iter().flat_map(|c| &c.utterances) {
        corpus.logits(u)?.save(logits.join(format!("{}.{LOGIT_EXT}", u.id)))?;
    }
    let dir = ctx.stage_dir("synth")?;
    let mut m = ctx.manifest("synth");
    if let Some(v) = ctx.cfg.vocabulary() {
        write_file(&v, &(corpus.vocabulary.join("\n") + "\n"))?;
        m.outputs.insert(v.display().to_string(), hash_path(&v)?);
    }
    let mut summary = String::new();
    for split in Split::ALL {
        let convs: Vec<_> = corpus.conversations.iter().filter(|c| c.split == split).collect();
        let utts: usize = convs.iter().map(|c| c.utterances.len()).sum();
        writeln!(
            summary,
            "{split}_conversations={}\n{split}_utterances={utts}",
            convs.len()
        )?;
    }
    writeln!(summary, "vocabulary={}", corpus.vocabulary.len())?;
    write_file(&dir.join("summary.txt"), &summary)?;
    m.outputs.insert(path.display().to_string(), hash_path(&path)?);
    m.outputs.insert(logits.display().to_string(), hash_path(&logits)?);
    m.finish(&dir)?;
    print!("{summary}");
    Ok(())
}

pub fn train_lm(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let dir = ctx.stage_dir("train-lm")?;
    let discounting = if cfg.lm_single_discount() {
        Discounting::Single
    } else {
        Discounting::Modified
    };
    let fusion_order = cfg.lm_order();
    let fusion = train_with(
        &ctx.lm_sentences(cfg.lm_unit())?,
        fusion_order,
        &prune(cfg.lm_prune(), fusion_order),
        discounting,
    )?;
    let scorer_order = cfg.scorer_lm_order();
    let scorer = train_with(
        &ctx.lm_sentences(Unit::Word)?,
        scorer_order,
        &prune(cfg.lm_prune(), scorer_order),
        discounting,
    )?;
    save_arpa(&fusion, dir.join("lm.arpa"))?;
    save_arpa(&scorer, dir.join("scorer_lm.arpa"))?;
    let describe = |name: &str, m: &NGramModel| {
        let counts: Vec<String> = (1..=m.order()).map(|k| m.count(k).to_string()).collect();
        format!("{name}_order={}\n{name}_ngrams={}\n", m.order(), counts.join(","))
    };
    let summary = describe("lm", &fusion) + &describe("scorer_lm", &scorer);
    write_file(&dir.join("summary.txt"), &summary)?;
    let mut m = ctx.manifest("train-lm");
    m.input(&cfg.corpus())?;
    m.finish(&dir)?;
    print!("{summary}");
    Ok(())
}

pub fn tune_beam(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let eval = ctx.labelled(&ctx.conversations(Split::Eval)?)?;
    let base = ctx.beam_config(cfg.tune_width(), (0.0, 0.0))?;
    let ranges = BeamRanges {
        alpha: cfg.alpha_range(),
        beta: cfg.beta_range(),
    };
    let r = random_search_beam(
        &eval,
        &base,
        cfg.tune_objective(),
        cfg.tune_trials(),
        ranges,
        cfg.seed("tune"),
    )?;
    let dir = ctx.stage_dir("tune-beam")?;
    let mut csv = Vec::new();
    r.write_trials_csv(&mut csv)?;
    fs::write(dir.join("trials.csv"), csv)?;
    let words: usize = eval.iter().map(|e| e.1.len()).sum();
    let best = format!(
        "alpha={}\nbeta={}\nobjective_edits={}\nobjective_wer={}\ntrials={}\nfailed={}\n",
        r.best_params["alpha"],
        r.best_params["beta"],
        r.best_objective,
        plain_sig(r.best_objective / words as f64, 9),
        r.trials.len(),
        r.failed
    );
    write_file(&dir.join("best.txt"), &best)?;
    let mut m = ctx.manifest("tune-beam");
    for p in [cfg.corpus(), cfg.logits_dir()].into_iter().chain(ctx.beam_inputs()?) {
        m.input(&p)?;
    }
    m.finish(&dir)?;
    print!("{best}");
    Ok(())
}

pub fn decode_cmd(ctx: &Ctx, split: &str) -> Result<()> {
    let split = parse_split(split, &[Split::Train, Split::Eval])?;
    let convs = ctx.conversations(split)?;
    let weights = ctx.weights()?;
    let lists = decode(ctx, &convs, ctx.cfg.beam_width(), weights)?;
    let dir = ctx.stage_dir(&format!("decode/{split}"))?;
    save_nbest(&dir.join(NBEST), &lists)?;
    write_file(&dir.join("top.txt"), &tops_file(&lists, top_text)?)?;
    let refs = references(&convs);
    let wer = total_wer(&pairs(&lists, &refs, top_text)?)?;
    let summary = format!(
        "alpha={}\nbeta={}\nutterances={}\nwer={}\n",
        weights.0,
        weights.1,
        lists.len(),
        plain_sig(wer, 9)
    );
    write_file(&dir.join("summary.txt"), &summary)?;
    let mut m = ctx.manifest("decode");
    for p in [ctx.cfg.corpus(), ctx.cfg.logits_dir()]
        .into_iter()
        .chain(ctx.beam_inputs()?)
        .chain(ctx.weight_inputs())
    {
        m.input(&p)?;
    }
    m.finish(&dir)?;
    print!("{summary}");
    Ok(())
}

fn decode_artifact(split: Split) -> Artifact {
    Artifact::new("decode", format!("{split}/{NBEST}"), format!("decode --split {split}"))
}

pub fn oracle_cmd(ctx: &Ctx, split: &str) -> Result<()> {
    let split = parse_split(split, &[Split::Train, Split::Eval])?;
    let src = ctx.require(&decode_artifact(split))?;
    let lists = load_nbest(&src)?;
    let refs = references(&ctx.conversations(split)?);
    let mut table = String::new();
    for l in &lists {
        let r = &refs[&l.utterance_id];
        let c = oracle_select(l, r)?;
        writeln!(
            table,
            "{}\t{}\t{}",
            l.utterance_id,
            word_edit_distance(&c.text, r),
            c.text_string()
        )?;
    }
    let oracle = total_wer(&pairs(&lists, &refs, |l| {
        Ok(oracle_select(l, &refs[&l.utterance_id])?.text.clone())
    })?)?;
    let baseline = total_wer(&pairs(&lists, &refs, top_text)?)?;
    let dir = ctx.stage_dir(&format!("oracle/{split}"))?;
    write_file(&dir.join("oracle.txt"), &table)?;
    let summary = format!(
        "wer_baseline={}\nwer_oracle={}\n",
        plain_sig(baseline, 9),
        plain_sig(oracle, 9)
    );
    write_file(&dir.join("summary.txt"), &summary)?;
    let mut m = ctx.manifest("oracle");
    m.input(&src)?;
    m.input(&ctx.cfg.corpus())?;
    m.finish(&dir)?;
    print!("{summary}");
    Ok(())
}

pub fn tune_gamma(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let src = ctx.require(&decode_artifact(Split::Eval))?;
    let convs = ctx.conversations(Split::Eval)?;
    let lists = load_nbest(&src)?;
    let scorer = ctx.scorer()?;
    let scored = ctx.score(&scorer, &convs, &lists)?;
    let refs = references(&convs);
    let items: Vec<(NBestList, Vec<String>)> = scored
        .into_iter()
        .map(|l| {
            let r = refs[&l.utterance_id].clone();
            (l, r)
        })
        .collect();
    let search = grid_search_gamma(&items, cfg.gamma_range(), cfg.gamma_step(), cfg.standardize())?;
    let dir = ctx.stage_dir("tune-gamma")?;
    let mut curve = Vec::new();
    search.write_curve_csv(&mut curve)?;
    fs::write(dir.join("curve.csv"), curve)?;
    let mut trials = Vec::new();
    search.result.write_trials_csv(&mut trials)?;
    fs::write(dir.join("trials.csv"), trials)?;
    let best = format!(
        "gamma={}\nwer={}\nwer_gamma0={}\npoints={}\n",
        search.result.best_params["gamma"],
        plain_sig(search.result.best_objective, 9),
        plain_sig(search.curve[0].1, 9),
        search.curve.len()
    );
    write_file(&dir.join("best.txt"), &best)?;
    let mut m = ctx.manifest("tune-gamma");
    m.input(&src)?;
    m.input(&cfg.corpus())?;
    for p in ctx.scorer_inputs()? {
        m.input(&p)?;
    }
    m.finish(&dir)?;
    print!("{best}");
    Ok(())
}

pub fn rescore_cmd(ctx: &Ctx, split: &str) -> Result<()> {
    let split = parse_split(split, &[Split::Train, Split::Eval])?;
    let src = ctx.require(&decode_artifact(split))?;
    let convs = ctx.conversations(split)?;
    let gamma = ctx.gamma()?;
    let scorer = ctx.scorer()?;
    let scored = ctx.score(&scorer, &convs, &load_nbest(&src)?)?;
    let reranked = rerank(&scored, gamma, ctx.cfg.standardize())?;
    let dir = ctx.stage_dir(&format!("rescore/{split}"))?;
    save_nbest(&dir.join(NBEST), &reranked)?;
    write_file(
        &dir.join("top.txt"),
        &tops_file(&reranked, |l| Ok(l.candidates[0].text.clone()))?,
    )?;
    let refs = references(&convs);
    let wer = total_wer(&pairs(&reranked, &refs, |l| Ok(l.candidates[0].text.clone()))?)?;
    let summary = format!("gamma={gamma}\nwer={}\n", plain_sig(wer, 9));
    write_file(&dir.join("summary.txt"), &summary)?;
    let mut m = ctx.manifest("rescore");
    m.input(&src)?;
    m.input(&ctx.cfg.corpus())?;
    for p in ctx.scorer_inputs()?.into_iter().chain(ctx.gamma_inputs()) {
        m.input(&p)?;
    }
    m.finish(&dir)?;
    print!("{summary}");
    Ok(())
}

fn rerank(scored: &[NBestList], gamma: f64, standardize: bool) -> Result<Vec<NBestList>> {
    scored
        .iter()
        .map(|l| {
            let scores = attached_scores(l).context("list without scores")?;
            Ok(interpolate(l, &scores, gamma, standardize)?)
        })
        .collect()
}

pub fn gen_tasks(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let seed = cfg.seed("tasks");
    let dir = ctx.stage_dir("tasks")?;
    let mut m = ctx.manifest("gen-tasks");
    m.input(&cfg.corpus())?;
    let mut stats = String::new();
    let mut any_nbest = false;
    for split in [Split::Train, Split::Eval] {
        let convs = ctx.conversations(split)?;
        let cnsp = gen_cnsp(&convs, cfg.cnsp_ratio(), seed)?;
        write_jsonl(&dir.join(format!("cnsp_{split}.jsonl")), &cnsp)?;
        writeln!(stats, "cnsp_{split}={}", cnsp.len())?;

        let art = decode_artifact(split);
        let path = ctx.out().join(art.stage).join(&art.file);
        if !path.is_file() {
            continue;
        }
        any_nbest = true;
        m.input(&path)?;
        let lists = load_nbest(&path)?;
        let refs = references(&convs);
        let contexts = ctx.contexts(&convs, &lists)?;
        let groups: Vec<NBestGroup> = lists
            .into_iter()
            .map(|nbest| NBestGroup {
                reference: refs[&nbest.utterance_id].clone(),
                context: contexts[&nbest.utterance_id].clone(),
                nbest,
            })
            .collect();
        let (dis, dstats) = gen_disambiguation(&groups, cfg.task_target(), cfg.task_negatives(), seed);
        write_jsonl(&dir.join(format!("disambiguation_{split}.jsonl")), &dis)?;
        let (pw, _) = gen_pairwise_eval(&groups, seed);
        write_jsonl(&dir.join(format!("pairwise_{split}.jsonl")), &pw)?;
        writeln!(
            stats,
            "disambiguation_{split}={}\ndisambiguation_{split}_dropped_groups={}\npairwise_{split}={}",
            dis.len(),
            dstats.dropped,
            pw.len()
        )?;
    }
    if !any_nbest {
        bail!("no N-best lists found; run `ctc-rescore decode --split train` or `--split eval` first");
    }
    write_file(&dir.join("stats.txt"), &stats)?;
    m.finish(&dir)?;
    print!("{stats}");
    Ok(())
}

fn write_jsonl<'a, T>(path: &Path, samples: &'a [T]) -> Result<()>
where
    ctc_rescore::taskgen::TaskRecord: From<&'a T>,
{
    let mut buf = Vec::new();
    write_records(&mut buf, samples)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// Everything evaluation needs about one split.
struct SplitResult {
    split: Split,
    gamma: f64,
    weights: (f64, f64),
    refs: HashMap<String, Vec<String>>,
    convs: Vec<Conversation>,
    scored: Vec<NBestList>,
    reranked: Vec<NBestList>,
    inputs: Vec<std::path::PathBuf>,
}

/// Eval uses the decode stage's lists; test decodes in memory with the
/// eval-tuned weights. Nothing is tuned here.
fn evaluate_split(ctx: &mut Ctx, split: Split) -> Result<SplitResult> {
    let mut inputs = vec![ctx.cfg.corpus()];
    let weights = ctx.weights()?;
    let gamma = ctx.gamma()?;
    inputs.extend(ctx.gamma_inputs());
    let (convs, lists) = match split {
        Split::Test => {
            ctx.enter_test_mode();
            let convs = ctx.conversations(Split::Test)?;
            let lists = decode(ctx, &convs, ctx.cfg.beam_width(), weights)?;
            inputs.push(ctx.cfg.logits_dir());
            inputs.extend(ctx.beam_inputs()?);
            inputs.extend(ctx.weight_inputs());
            (convs, lists)
        }
        _ => {
            let src = ctx.require(&decode_artifact(split))?;
            inputs.push(src.clone());
            (ctx.conversations(split)?, load_nbest(&src)?)
        }
    };
    let scorer = ctx.scorer()?;
    inputs.extend(ctx.scorer_inputs()?);
    let scored = ctx.score(&scorer, &convs, &lists)?;
    let reranked = rerank(&scored, gamma, ctx.cfg.standardize())?;
    Ok(SplitResult {
        split,
        gamma,
        weights,
        refs: references(&convs),
        convs,
        scored,
        reranked,
        inputs,
    })
}

fn metrics_text(r: &SplitResult, bin_width: usize) -> Result<(String, WerReport, WerReport, WerReport)> {
    let base = binned_wer(&pairs(&r.scored, &r.refs, top_text)?, bin_width)?;
    let resc = binned_wer(
        &pairs(&r.reranked, &r.refs, |l| Ok(l.candidates[0].text.clone()))?,
        bin_width,
    )?;
    let orac = binned_wer(
        &pairs(&r.scored, &r.refs, |l| {
            Ok(oracle_select(l, &r.refs[&l.utterance_id])?.text.clone())
        })?,
        bin_width,
    )?;
    let mut s = format!(
        "split={}\nalpha={}\nbeta={}\ngamma={}\nutterances={}\n",
        r.split,
        r.weights.0,
        r.weights.1,
        r.gamma,
        r.scored.len()
    );
    for (name, rep) in [("baseline", &base), ("rescored", &resc), ("oracle", &orac)] {
        writeln!(
            s,
            "wer_{name}={}\ncer_{name}={}",
            plain_sig(rep.wer, 9),
            plain_sig(rep.cer, 9)
        )?;
    }
    match werr(base.wer, resc.wer, orac.wer) {
        Ok(w) => writeln!(s, "werr={}", plain_sig(w, 9))?,
        Err(_) => writeln!(s, "werr=")?,
    }
    Ok((s, base, resc, orac))
}

pub fn eval_cmd(ctx: &mut Ctx, split: &str, pairwise: Option<&Path>) -> Result<()> {
    let split = parse_split(split, &[Split::Eval, Split::Test])?;
    let r = evaluate_split(ctx, split)?;
    let (text, base, resc, _) = metrics_text(&r, ctx.cfg.bin_width())?;
    let dir = ctx.stage_dir(&format!("eval/{split}"))?;
    write_file(&dir.join("metrics.txt"), &text)?;
    write_file(&dir.join("bins_baseline.csv"), &base.bins_csv())?;
    write_file(&dir.join("bins_rescored.csv"), &resc.bins_csv())?;
    if split == Split::Test {
        save_nbest(&dir.join(NBEST), &r.reranked)?;
    }
    let mut m = ctx.manifest("eval");
    for p in &r.inputs {
        m.input(p)?;
    }
    print!("{text}");
    if let Some(path) = pairwise {
        let res = pairwise_eval(ctx, path)?;
        let s = format!(
            "pairs={}\naccuracy={}\ntrue_positive_rate={}\ntrue_negative_rate={}\nties={}\n",
            res.sample_count / 2,
            plain_sig(res.accuracy, 9),
            plain_sig(res.true_positive_rate, 9),
            plain_sig(res.true_negative_rate, 9),
            res.ties
        );
        write_file(&dir.join("pairwise.txt"), &s)?;
        m.input(path)?;
        print!("{s}");
    }
    m.finish(&dir)?;
    Ok(())
}

fn pairwise_eval(ctx: &Ctx, path: &Path) -> Result<PairwiseEvalResult> {
    let f = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let records = read_records(BufReader::new(f))?;
    let samples = records
        .into_iter()
        .map(PairwiseSample::try_from)
        .collect::<Result<Vec<_>, _>>()
        .map_err(anyhow::Error::msg)
        .with_context(|| format!("{} is not a pairwise task file", path.display()))?;
    let scorer = ctx.scorer()?;
    Ok(evaluate_pairwise(&scorer.cached, &samples, ctx.cfg.scorer_mode())?)
}

pub fn report(ctx: &mut Ctx, split: &str) -> Result<()> {
    let split = parse_split(split, &[Split::Eval, Split::Test])?;
    let r = evaluate_split(ctx, split)?;
    let cfg = &ctx.cfg;
    let (_, base, resc, orac) = metrics_text(&r, cfg.bin_width())?;

    // Reference rows: greedy decoding and the vocabulary-only beam.
    let labelled = ctx.labelled(&r.convs)?;
    let greedy: Vec<EvalPair> = labelled
        .iter()
        .map(|(z, t)| EvalPair::new(t.clone(), greedy_decode(z)))
        .collect();
    let greedy_wer = total_wer(&greedy)?;
    let vocab_cfg = ctc_rescore::decoder::BeamConfig {
        lm: None,
        alpha: 0.0,
        beta: 0.0,
        ..ctx.beam_config(cfg.beam_width(), (0.0, 0.0))?
    };
    let vocab_lists = decode_all(
        &BeamDecoder::new(vocab_cfg)?,
        &labelled.iter().map(|x| x.0.clone()).collect::<Vec<_>>(),
    )
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let vocab_wer = total_wer(&pairs(&vocab_lists, &r.refs, top_text)?)?;

    let werr_of = |w: f64| {
        werr(base.wer, w, orac.wer)
            .map(|x| plain_sig(100.0 * x, 4))
            .unwrap_or_default()
    };
    let pct = |w: f64| plain_sig(100.0 * w, 4);
    let mut table = String::from("system,wer_percent,werr_percent\n");
    writeln!(table, "greedy,{},", pct(greedy_wer))?;
    writeln!(table, "beam_vocabulary,{},", pct(vocab_wer))?;
    writeln!(table, "beam_lm,{},", pct(base.wer))?;
    writeln!(table, "rescored,{},{}", pct(resc.wer), werr_of(resc.wer))?;
    writeln!(table, "oracle,{},100", pct(orac.wer))?;

    // The curve is a diagnostic over this split; gamma itself stays the
    // eval-tuned value.
    let items: Vec<(NBestList, Vec<String>)> = r
        .scored
        .iter()
        .map(|l| (l.clone(), r.refs[&l.utterance_id].clone()))
        .collect();
    let curve = grid_search_gamma(&items, cfg.gamma_range(), cfg.gamma_step(), cfg.standardize())?;

    let mut bins = String::from("bin_start,words,wer_baseline,wer_rescored,wer_oracle\n");
    for (&start, &(_, words)) in &base.per_bin {
        let w = |rep: &WerReport| rep.bin_wer(start).map(|x| plain_sig(x, 9)).unwrap_or_default();
        writeln!(bins, "{start},{words},{},{},{}", w(&base), w(&resc), w(&orac))?;
    }

    let dir = ctx.stage_dir(&format!("report/{split}"))?;
    write_file(&dir.join("table.csv"), &table)?;
    let mut c = Vec::new();
    curve.write_curve_csv(&mut c)?;
    fs::write(dir.join("curve.csv"), c)?;
    write_file(&dir.join("bins.csv"), &bins)?;
    let mut m = ctx.manifest("report");
    for p in &r.inputs {
        m.input(p)?;
    }
    m.input(&ctx.cfg.logits_dir())?;
    m.finish(&dir)?;
    print!("{table}");
    Ok(())
}

/// Answers protocol requests on stdin with the n-gram scorer until EOF.
pub fn serve(lm: &Path) -> Result<()> {
    let model = ctc_rescore::ngram::load_arpa(lm).with_context(|| format!("reading {}", lm.display()))?;
    let scorer = NgramScorer::new(std::sync::Arc::new(model));
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_lines(&scorer, stdin.lock(), stdout.lock())?;
    Ok(())
}
