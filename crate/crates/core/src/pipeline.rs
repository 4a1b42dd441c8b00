//! Experiment stages. Each stage reads what earlier stages left in the
//! output directory and writes its own versioned artifacts there:
//!
//! ```text
//! config.txt                       effective configuration
//! parsers/<src>.parser             train-parsers
//! crossparse/groups.tsv            cross-parse
//! labels/{train,dev}.tsv           make-labels
//! pretrain/mlm.*                   pretrain
//! ilps/ilps.*, ilps/trace.tsv      train-ilps
//! predict/scores.tsv               predict
//! predict/parses/<tgt>/<src>.conllu
//! select/<method>/<tgt>.tsv        select, baselines
//! baselines/{kl,l2v}.tsv           baselines
//! output/<system>/<tgt>.conllu     reparse, oracle
//! oracle/oracle.tsv                oracle
//! report.txt, report.tsv           evaluate
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{
    baseline_ensemble, cosine, kl_scores, kl_select, kl_similarities, read_language_vectors, TrigramCounts,
};
use crate::config::ExperimentConfig;
use crate::crossparse::{
    balance_examples, group_records, make_labels, read_examples, read_groups, records_from_predictions, split_examples,
    write_examples, write_groups, CrossParseRecord,
};
use crate::error::{Error, Result};
use crate::eval::{build_report, oracle_ilps, oracle_sbps, score_sentence, SentenceScore, SystemRun};
use crate::model::{IlpsModel, MlmModel};
use crate::parallel::parallel_map;
use crate::parser::{train_parser, SourceParserModel};
use crate::select::{argmax, read_selection_report, reparse, select, write_selection_report, Method, ScoreMatrix, Selection};
use crate::treebank::{delexicalize, read_conllu, write_conllu, Sentence, Treebank, Upos};
use crate::ParserId;

pub const PARSES_HEADER: &str = "ilps-parses v1";
const TSV_HEADER: &str = "# ilps-table v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    TrainParsers,
    CrossParse,
    MakeLabels,
    Pretrain,
    TrainIlps,
    Predict,
    Select,
    Reparse,
    Baselines,
    Evaluate,
    Oracle,
    All,
}

impl Stage {
    pub const NAMES: [(&'static str, Stage); 12] = [
        ("train-parsers", Stage::TrainParsers),
        ("cross-parse", Stage::CrossParse),
        ("make-labels", Stage::MakeLabels),
        ("pretrain", Stage::Pretrain),
        ("train-ilps", Stage::TrainIlps),
        ("predict", Stage::Predict),
        ("select", Stage::Select),
        ("reparse", Stage::Reparse),
        ("baselines", Stage::Baselines),
        ("evaluate", Stage::Evaluate),
        ("oracle", Stage::Oracle),
        ("all", Stage::All),
    ];

    /// Order in which `all` runs the stages.
    pub const PIPELINE: [Stage; 11] = [
        Stage::TrainParsers,
        Stage::CrossParse,
        Stage::MakeLabels,
        Stage::Pretrain,
        Stage::TrainIlps,
        Stage::Predict,
        Stage::Select,
        Stage::Baselines,
        Stage::Reparse,
        Stage::Oracle,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        Stage::NAMES.iter().find(|(_, s)| *s == self).unwrap().0
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::NAMES
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, st)| *st)
            .ok_or_else(|| Error::Config(format!("unknown stage `{}`", s)))
    }
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    out: PathBuf,
    jobs: usize,
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, stage })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_parses(path: &Path, gold: &Treebank, heads: &[Vec<usize>]) -> Result<()> {
    let tb = Treebank::new(
        gold.language.clone(),
        gold.split,
        gold.sentences
            .iter()
            .zip(heads)
            .map(|(s, h)| s.with_heads(h))
            .collect(),
    );
    let mut buf = Vec::new();
    write_conllu(&mut buf, &tb, &[PARSES_HEADER.to_owned()]).map_err(|e| Error::io(path, e))?;
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Head arrays from a predicted CoNLL-U file aligned with `gold` by
/// position. Files written by this pipeline must carry its header.
fn read_parses(path: &Path, gold: &Treebank, ours: bool) -> Result<Vec<Vec<usize>>> {
    if ours {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.lines().next() != Some(&format!("# {}", PARSES_HEADER)) {
            return Err(Error::format(path, format!("expected header `# {}`", PARSES_HEADER)));
        }
    }
    let predicted = read_conllu(path, &gold.language)?;
    // reuse the length and tag checks
    records_from_predictions(ParserId(1), gold, &predicted)?;
    Ok(predicted.sentences.iter().map(Sentence::heads).collect())
}

fn read_checked(path: &Path, header: &str) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.lines().next() != Some(header) {
        return Err(Error::format(path, format!("expected header `{}`", header)));
    }
    Ok(text)
}

impl Pipeline {
    /// Validates `cfg`, creates `out` and records the effective config.
    pub fn new(cfg: ExperimentConfig, out: PathBuf, jobs: usize) -> Result<Self> {
        cfg.validate()?;
        create_dir(&out)?;
        write_text(&out.join("config.txt"), &cfg.echo())?;
        Ok(Pipeline {
            cfg,
            out,
            jobs: jobs.max(1),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        if stage == Stage::All {
            for s in Stage::PIPELINE {
                self.run(s)?;
            }
            return Ok(());
        }
        log::info!("stage {}", stage);
        match stage {
            Stage::TrainParsers => self.train_parsers(),
            Stage::CrossParse => self.cross_parse(),
            Stage::MakeLabels => self.make_labels(),
            Stage::Pretrain => self.pretrain(),
            Stage::TrainIlps => self.train_ilps(),
            Stage::Predict => self.predict(),
            Stage::Select => self.select(),
            Stage::Reparse => self.reparse(),
            Stage::Baselines => self.baselines(),
            Stage::Evaluate => self.evaluate(),
            Stage::Oracle => self.oracle(),
            Stage::All => unreachable!(),
        }
    }

    /// Source languages in parser-id order.
    pub fn source_languages(&self) -> Vec<String> {
        self.cfg.sources.keys().cloned().collect()
    }

    fn sources(&self) -> Result<Vec<Treebank>> {
        self.cfg
            .sources
            .iter()
            .map(|(l, p)| Ok(delexicalize(&read_conllu(p, l)?)))
            .collect()
    }

    fn targets(&self) -> Result<Vec<Treebank>> {
        self.cfg
            .targets
            .iter()
            .map(|(l, p)| Ok(delexicalize(&read_conllu(p, l)?)))
            .collect()
    }

    fn parser_path(&self, lang: &str) -> PathBuf {
        self.out.join("parsers").join(format!("{}.parser", lang))
    }

    fn load_parser(&self, lang: &str) -> Result<SourceParserModel> {
        SourceParserModel::load(&require(self.parser_path(lang), "train-parsers")?)
    }

    fn target_parse_path(&self, target: &str, parser: &str) -> PathBuf {
        self.out
            .join("predict")
            .join("parses")
            .join(target)
            .join(format!("{}.conllu", parser))
    }

    fn train_parsers(&self) -> Result<()> {
        let sources = self.sources()?;
        let base = self.cfg.stage_seed("parsers");
        let indexed: Vec<(usize, &Treebank)> = sources.iter().enumerate().collect();
        let models = parallel_map(&indexed, self.jobs, |&(i, tb)| {
            log::info!("training parser {} on {} sentences", tb.language, tb.len());
            train_parser(tb, self.cfg.parser_epochs, base.wrapping_add(i as u64))
        });
        create_dir(&self.out.join("parsers"))?;
        for m in models {
            let m = m?;
            m.save(&self.parser_path(&m.language))?;
        }
        Ok(())
    }

    /// Parses of `tb` by source parser `lang`: supplied externally, or
    /// produced by the trained parser.
    fn parses_for(&self, lang: &str, tb: &Treebank) -> Result<Vec<Vec<usize>>> {
        match self.cfg.external.get(&(lang.to_owned(), tb.language.clone())) {
            Some(path) => read_parses(path, tb, false),
            None => {
                let parser = self.load_parser(lang)?;
                Ok(tb.sentences.iter().map(|s| parser.parse(s)).collect())
            }
        }
    }

    fn cross_parse(&self) -> Result<()> {
        let sources = self.sources()?;
        let langs = self.source_languages();
        let pairs: Vec<(usize, usize)> = (0..langs.len())
            .flat_map(|p| (0..sources.len()).map(move |t| (p, t)))
            .filter(|&(p, t)| langs[p] != sources[t].language)
            .collect();
        let results = parallel_map(&pairs, self.jobs, |&(p, t)| -> Result<Vec<CrossParseRecord>> {
            let heads = self.parses_for(&langs[p], &sources[t])?;
            let predicted = Treebank::new(
                sources[t].language.clone(),
                sources[t].split,
                sources[t]
                    .sentences
                    .iter()
                    .zip(&heads)
                    .map(|(s, h)| s.with_heads(h))
                    .collect(),
            );
            records_from_predictions(ParserId::from_index(p), &sources[t], &predicted)
        });
        let mut records = Vec::new();
        for r in results {
            records.extend(r?);
        }
        let groups = group_records(&records, &sources)?;
        create_dir(&self.out.join("crossparse"))?;
        write_groups(&self.out.join("crossparse").join("groups.tsv"), &groups)
    }

    fn make_labels(&self) -> Result<()> {
        let groups = read_groups(&require(self.out.join("crossparse").join("groups.tsv"), "cross-parse")?)?;
        let mut examples = make_labels(&groups)?;
        if self.cfg.resample {
            examples = balance_examples(&examples, &groups, self.cfg.stage_seed("resample"))?;
        }
        let (train, dev) = split_examples(&examples, self.cfg.dev_fraction, self.cfg.stage_seed("split"))?;
        log::info!("{} training and {} dev examples", train.len(), dev.len());
        let dir = self.out.join("labels");
        create_dir(&dir)?;
        write_examples(&dir.join("train.tsv"), &train)?;
        write_examples(&dir.join("dev.tsv"), &dev)
    }

    fn pretrain(&self) -> Result<()> {
        if self.cfg.pretrain_steps == 0 {
            log::info!("pretraining disabled");
            return Ok(());
        }
        let corpus: Vec<Vec<Upos>> = self
            .sources()?
            .iter()
            .flat_map(|tb| tb.sentences.iter().map(Sentence::upos))
            .collect();
        let mut mlm = MlmModel::new(&self.cfg.model, self.cfg.stage_seed("init"))?;
        let losses = mlm.pretrain(&corpus, &self.cfg.mlm_config())?;
        let dir = self.out.join("pretrain");
        mlm.save(&dir)?;
        let mut text = format!("{}\nstep\tloss\n", TSV_HEADER);
        for (i, l) in losses.iter().enumerate() {
            writeln!(text, "{}\t{:?}", i, l).unwrap();
        }
        write_text(&dir.join("losses.tsv"), &text)
    }

    fn train_ilps(&self) -> Result<()> {
        let labels = self.out.join("labels");
        let train = read_examples(&require(labels.join("train.tsv"), "make-labels")?)?;
        let dev = read_examples(&require(labels.join("dev.tsv"), "make-labels")?)?;
        let mut model = IlpsModel::new(&self.cfg.model, &self.source_languages(), self.cfg.stage_seed("init"))?;
        if self.cfg.pretrain_steps > 0 {
            let dir = self.out.join("pretrain");
            require(dir.join("mlm.manifest"), "pretrain")?;
            model.load_pretrained(&MlmModel::load(&dir)?)?;
        }
        let trace = model.train_regressor(&train, &dev, &self.cfg.train_config())?;
        log::info!(
            "best dev RMSE {:.4} at step {}",
            trace.best_dev_rmse,
            trace.best_step
        );
        let dir = self.out.join("ilps");
        model.save(&dir)?;
        let mut text = format!("{}\nstep\tdev_rmse\n", TSV_HEADER);
        for (s, r) in &trace.dev_rmse {
            writeln!(text, "{}\t{:?}", s, r).unwrap();
        }
        writeln!(text, "best\t{:?}", trace.best_dev_rmse).unwrap();
        write_text(&dir.join("trace.tsv"), &text)
    }

    fn predict(&self) -> Result<()> {
        let dir = self.out.join("ilps");
        require(dir.join("ilps.manifest"), "train-ilps")?;
        let model = IlpsModel::load(&dir)?;
        if model.parsers().iter().map(|p| &p.language).ne(self.cfg.sources.keys()) {
            return Err(Error::DataIntegrity(
                "trained model's parsers do not match the configured sources".into(),
            ));
        }
        let targets = self.targets()?;
        let sentences: Vec<(String, Vec<Upos>)> = targets
            .iter()
            .flat_map(|tb| tb.sentences.iter().map(|s| (s.id.clone(), s.upos())))
            .collect();
        let scores = model.predict_scores(&sentences, self.jobs)?;
        create_dir(&self.out.join("predict"))?;
        scores.write(&self.out.join("predict").join("scores.tsv"))?;

        let langs = self.source_languages();
        let pairs: Vec<(usize, usize)> = (0..targets.len())
            .flat_map(|t| (0..langs.len()).map(move |p| (t, p)))
            .collect();
        let parses = parallel_map(&pairs, self.jobs, |&(t, p)| self.parses_for(&langs[p], &targets[t]));
        for (&(t, p), heads) in pairs.iter().zip(parses) {
            write_parses(&self.target_parse_path(&targets[t].language, &langs[p]), &targets[t], &heads?)?;
        }
        Ok(())
    }

    fn target_scores(&self, scores: &ScoreMatrix, tb: &Treebank) -> Result<ScoreMatrix> {
        let ids: Vec<String> = tb.sentences.iter().map(|s| s.id.clone()).collect();
        scores.select_columns(&ids)
    }

    fn selection_path(&self, method: &str, target: &str) -> PathBuf {
        self.out.join("select").join(method).join(format!("{}.tsv", target))
    }

    fn write_selections(&self, method: &str, tb: &Treebank, sel: Vec<Selection>) -> Result<()> {
        let rows: Vec<(String, Selection)> = tb.sentences.iter().map(|s| s.id.clone()).zip(sel).collect();
        let path = self.selection_path(method, &tb.language);
        create_dir(path.parent().unwrap())?;
        write_selection_report(&path, &rows)
    }

    fn select(&self) -> Result<()> {
        let scores = ScoreMatrix::read(&require(self.out.join("predict").join("scores.tsv"), "predict")?)?;
        if scores.parsers().len() != self.cfg.sources.len() {
            return Err(Error::DataIntegrity("score matrix and sources disagree".into()));
        }
        for tb in self.targets()? {
            let s = self.target_scores(&scores, &tb)?;
            for method in Method::ALL {
                self.write_selections(method.as_str(), &tb, select(&s, method, self.cfg.tau)?)?;
            }
        }
        Ok(())
    }

    fn baselines(&self) -> Result<()> {
        let sources = self.sources()?;
        let targets = self.targets()?;
        let langs = self.source_languages();
        let source_counts: Vec<TrigramCounts> = sources.iter().map(TrigramCounts::from_treebank).collect();
        let mut kl_table = format!("{}\ntarget\t{}\n", TSV_HEADER, langs.join("\t"));
        for tb in &targets {
            let kl = kl_scores(&TrigramCounts::from_treebank(tb), &source_counts, self.cfg.alpha)?;
            let cells: Vec<String> = kl.iter().map(|v| format!("{:.6}", v)).collect();
            writeln!(kl_table, "{}\t{}", tb.language, cells.join("\t")).unwrap();
            let n = tb.len();
            self.write_selections("kl-sbps", tb, vec![Selection::single(kl_select(&kl)); n])?;
            let ens = baseline_ensemble(&kl_similarities(&kl), self.cfg.tau)?;
            self.write_selections("ens-kl-sbps", tb, vec![ens; n])?;
        }
        write_text(&self.out.join("baselines").join("kl.tsv"), &kl_table)?;

        let Some(vpath) = &self.cfg.vectors else {
            return Ok(());
        };
        let vectors: BTreeMap<String, Vec<f64>> = read_language_vectors(vpath)?
            .into_iter()
            .map(|v| (v.language, v.values))
            .collect();
        let lookup = |l: &str| {
            vectors
                .get(l)
                .ok_or_else(|| Error::DataIntegrity(format!("{} has no language vector", l)))
        };
        let mut table = format!("{}\ntarget\t{}\n", TSV_HEADER, langs.join("\t"));
        for tb in &targets {
            let t = lookup(&tb.language)?;
            let sims = langs
                .iter()
                .map(|l| Ok(cosine(t, lookup(l)?)))
                .collect::<Result<Vec<f64>>>()?;
            let cells: Vec<String> = sims.iter().map(|v| format!("{:.6}", v)).collect();
            writeln!(table, "{}\t{}", tb.language, cells.join("\t")).unwrap();
            let n = tb.len();
            let best = ParserId::from_index(argmax(&sims));
            self.write_selections("l2v-sbps", tb, vec![Selection::single(best); n])?;
            self.write_selections("ens-l2v-sbps", tb, vec![baseline_ensemble(&sims, self.cfg.tau)?; n])?;
        }
        write_text(&self.out.join("baselines").join("l2v.tsv"), &table)
    }

    /// Every source parser's parses of `tb`, in parser order.
    fn target_parses(&self, tb: &Treebank) -> Result<Vec<Vec<Vec<usize>>>> {
        self.source_languages()
            .iter()
            .map(|l| read_parses(&require(self.target_parse_path(&tb.language, l), "predict")?, tb, true))
            .collect()
    }

    fn methods(&self) -> Result<Vec<String>> {
        let dir = require(self.out.join("select"), "select")?;
        let mut methods: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        methods.sort();
        Ok(methods)
    }

    fn reparse(&self) -> Result<()> {
        let methods = self.methods()?;
        for tb in self.targets()? {
            let parses = self.target_parses(&tb)?;
            for method in &methods {
                let path = self.selection_path(method, &tb.language);
                if !path.exists() {
                    continue;
                }
                let rows = read_selection_report(&path)?;
                if rows.len() != tb.len() || rows.iter().zip(&tb.sentences).any(|((id, _), s)| *id != s.id) {
                    return Err(Error::DataIntegrity(format!(
                        "{} does not list the sentences of {}",
                        path.display(),
                        tb.language
                    )));
                }
                let heads: Vec<Vec<usize>> = rows
                    .iter()
                    .enumerate()
                    .map(|(j, (_, sel))| {
                        let trees: Vec<&[usize]> = sel
                            .parsers
                            .iter()
                            .map(|p| parses[p.index()][j].as_slice())
                            .collect();
                        reparse(&trees, &sel.weights)
                    })
                    .collect();
                write_parses(&self.system_path(method, &tb.language), &tb, &heads)?;
            }
        }
        Ok(())
    }

    fn system_path(&self, system: &str, target: &str) -> PathBuf {
        self.out.join("output").join(system).join(format!("{}.conllu", target))
    }

    fn score_all(&self, tb: &Treebank, heads: &[Vec<usize>]) -> Result<Vec<SentenceScore>> {
        tb.sentences
            .iter()
            .zip(heads)
            .map(|(s, h)| score_sentence(s, h, self.cfg.include_punct))
            .collect()
    }

    fn oracle(&self) -> Result<()> {
        let langs = self.source_languages();
        let mut table = format!(
            "{}\ntarget\toracle_sbps_parser\toracle_sbps_uas\toracle_ilps_uas\t{}\n",
            TSV_HEADER,
            langs.join("\t")
        );
        for tb in self.targets()? {
            let parses = self.target_parses(&tb)?;
            let scores = parses
                .iter()
                .map(|p| self.score_all(&tb, p))
                .collect::<Result<Vec<_>>>()?;
            let (best, sbps) = oracle_sbps(&scores)?;
            let ilps = oracle_ilps(&scores)?;
            let singles: Vec<String> = scores
                .iter()
                .map(|s| format!("{:.6}", crate::eval::micro_uas(s)))
                .collect();
            writeln!(
                table,
                "{}\t{}\t{:.6}\t{:.6}\t{}",
                tb.language,
                langs[best.index()],
                sbps,
                ilps,
                singles.join("\t")
            )
            .unwrap();
            write_parses(&self.system_path("oracle-sbps", &tb.language), &tb, &parses[best.index()])?;
            let per_sentence: Vec<Vec<usize>> = (0..tb.len())
                .map(|j| {
                    let correct: Vec<f64> = scores.iter().map(|s| s[j].correct as f64).collect();
                    parses[argmax(&correct)][j].clone()
                })
                .collect();
            write_parses(&self.system_path("oracle-ilps", &tb.language), &tb, &per_sentence)?;
        }
        write_text(&self.out.join("oracle").join("oracle.tsv"), &table)
    }

    /// Which parsers a system used on a target, for the report.
    fn describe(&self, system: &str, target: &str) -> Result<String> {
        let path = self.selection_path(system, target);
        if !path.exists() {
            return Ok(if system.starts_with("oracle") {
                "oracle".into()
            } else {
                String::new()
            });
        }
        let rows = read_selection_report(&path)?;
        let first = &rows[0].1.parsers;
        if rows.iter().any(|(_, s)| &s.parsers != first) {
            return Ok("per-sentence".into());
        }
        let langs = self.source_languages();
        Ok(first.iter().map(|p| langs[p.index()].as_str()).collect::<Vec<_>>().join("+"))
    }

    fn evaluate(&self) -> Result<()> {
        let targets = self.targets()?;
        let mut runs = Vec::new();
        let output = self.out.join("output");
        let mut systems: Vec<String> = if output.is_dir() {
            fs::read_dir(&output)
                .map_err(|e| Error::io(&output, e))?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .filter_map(|e| e.file_name().into_string().ok())
                .collect()
        } else {
            Vec::new()
        };
        systems.sort();
        for system in &systems {
            for tb in &targets {
                let path = self.system_path(system, &tb.language);
                if !path.exists() {
                    continue;
                }
                runs.push(SystemRun {
                    system: system.clone(),
                    language: tb.language.clone(),
                    selected: self.describe(system, &tb.language)?,
                    scores: self.score_all(tb, &read_parses(&path, tb, true)?)?,
                });
            }
        }
        for lang in self.source_languages() {
            for tb in &targets {
                let path = self.target_parse_path(&tb.language, &lang);
                if path.exists() {
                    runs.push(SystemRun {
                        system: format!("parser-{}", lang),
                        language: tb.language.clone(),
                        selected: lang.clone(),
                        scores: self.score_all(tb, &read_parses(&path, tb, true)?)?,
                    });
                }
            }
        }
        if runs.is_empty() {
            return Err(Error::MissingArtifact {
                path: output,
                stage: "reparse",
            });
        }
        let reference = runs
            .iter()
            .any(|r| r.system == self.cfg.reference)
            .then_some(self.cfg.reference.as_str());
        let report = build_report(&runs, reference)?;
        write_text(&self.out.join("report.txt"), &report.to_table())?;
        write_text(&self.out.join("report.tsv"), &report.to_tsv())
    }
}

/// Reads a table written by the pipeline (`baselines/*.tsv`,
/// `oracle/oracle.tsv`) into rows of cells, header row first.
pub fn read_table(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_checked(path, TSV_HEADER)?;
    Ok(text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_owned).collect())
        .collect())
}
