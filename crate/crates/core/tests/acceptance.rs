//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::gradcheck::{check, check_graph, uniform, CheckStats};
use common::oracles::{apcnn_brute, generate_brute, lccs_brute, linker_brute, rerank_brute};
use common::{toy_kb, toy_parses, trained_toy_detector, KeywordScorer};
use kbqa::encoders::{run_bilstm, BiLstmLayer, CnnLayer, LstmState, ResidualVariant};
use kbqa::kb::{Constraint, KnowledgeBase};
use kbqa::linker::{constraint_linker_score, lccs_len, link_top_k, simple_linker_score, LinkerScore, Mention};
use kbqa::pipeline::{generate_query, rerank_entities, Pipeline, PipelineConfig, RerankedEntity, ScoredChain};
use kbqa::scorers::{
    score_apcnn, ModelKind, QuestionInput, RelationDetector, RelationInput, RelationRepr, RelationScorer,
    ScorerConfig,
};
use kbqa::tensor::{ElementwiseKind, Gradients, Graph, ParamId, ParamStore, Tensor};
use kbqa::trainer::{build_vocab, ranking_loss, train, Hyperparams, TrainingExample};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("{what} took {t:.1?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- gradients

const INSTANCES: u64 = 20;

fn add_param(s: &mut ParamStore, name: &str, shape: Vec<usize>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ParamId {
    let n = shape.iter().product();
    s.insert(name, Tensor::new(shape, uniform(rng, n, lo, hi)).unwrap()).unwrap()
}

fn unary_case(rng: &mut ChaCha8Rng, f: fn(&mut Graph<'_>, kbqa::tensor::Var) -> kbqa::tensor::Var) -> CheckStats {
    let mut s = ParamStore::new();
    let a = add_param(&mut s, "a", vec![2, 3], rng, -1.0, 1.0);
    check_graph(&mut s, &move |g, s| {
        let a = g.param(s, a);
        Ok(f(g, a))
    })
}

fn binary_case(
    rng: &mut ChaCha8Rng,
    (lo, hi): (f64, f64),
    f: fn(&mut Graph<'_>, kbqa::tensor::Var, kbqa::tensor::Var) -> kbqa::Result<kbqa::tensor::Var>,
) -> CheckStats {
    let mut s = ParamStore::new();
    let a = add_param(&mut s, "a", vec![2, 3], rng, -1.0, 1.0);
    let b = add_param(&mut s, "b", vec![2, 3], rng, lo, hi);
    check_graph(&mut s, &move |g, s| {
        let (a, b) = (g.param(s, a), g.param(s, b));
        f(g, a, b)
    })
}

fn hinge_loss(det: &RelationDetector, ex: &TrainingExample, margin: f64, want: bool) -> (f64, Option<Gradients>) {
    let mut g = Graph::new();
    let q = det.encode_question(&mut g, &ex.question).unwrap();
    let gold = det.encode_relation(&mut g, &ex.gold).unwrap();
    let s_pos = det.match_score(&mut g, &q, &gold).unwrap();
    let mut hinges = Vec::new();
    for r in &ex.pool {
        let rr = det.encode_relation(&mut g, r).unwrap();
        let s_neg = det.match_score(&mut g, &q, &rr).unwrap();
        let d = g.sub(s_neg, s_pos).unwrap();
        let d = g.add_scalar(d, margin);
        hinges.push(g.relu(d));
    }
    let row = g.concat_cols(&hinges).unwrap();
    let loss = g.sum(row);
    let value = g.scalar(loss);
    (value, want.then(|| g.backward(loss).unwrap()))
}

fn detector_case(model: ModelKind, seed: u64) -> CheckStats {
    let ex = TrainingExample {
        question: QuestionInput::from_text("what tv show did <e> play on").unwrap(),
        gold: RelationInput::from_names(&["starring_roles", "series"]).unwrap(),
        pool: vec![
            RelationInput::from_names(&["profession"]).unwrap(),
            RelationInput::from_names(&["plays_produced"]).unwrap(),
        ],
    };
    let mut cfg = ScorerConfig::for_model(model);
    cfg.hidden = 3;
    cfg.embed_dim = 4;
    cfg.buckets = 17;
    let mut det = RelationDetector::new(cfg, build_vocab([&ex]), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let ids: Vec<_> = det.params().ids().collect();
    for id in ids {
        let n = det.params().tensor(id).numel();
        det.params_mut().set_values(id, &uniform(&mut rng, n, -0.5, 0.5)).unwrap();
    }
    check(&mut det, |d| d.params_mut(), |d, want| hinge_loss(d, &ex, 2.0, want))
}

type Case = (&'static str, Box<dyn Fn(u64) -> CheckStats>);

fn gradient_cases() -> Vec<Case> {
    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }
    vec![
        ("matmul", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let a = add_param(&mut s, "a", vec![3, 4], r, -1.0, 1.0);
            let b = add_param(&mut s, "b", vec![4, 2], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let (a, b) = (g.param(s, a), g.param(s, b));
                g.matmul(a, b)
            })
        })),
        ("add", Box::new(|seed| binary_case(&mut rng(seed), (-1.0, 1.0), |g, a, b| g.add(a, b)))),
        ("sub", Box::new(|seed| binary_case(&mut rng(seed), (-1.0, 1.0), |g, a, b| g.sub(a, b)))),
        ("mul", Box::new(|seed| binary_case(&mut rng(seed), (-1.0, 1.0), |g, a, b| g.mul(a, b)))),
        ("div", Box::new(|seed| binary_case(&mut rng(seed), (0.5, 1.5), |g, a, b| g.div(a, b)))),
        ("elementwise add", Box::new(|seed| {
            binary_case(&mut rng(seed), (-1.0, 1.0), |g, a, b| g.elementwise(ElementwiseKind::Add, a, Some(b)))
        })),
        ("elementwise mul", Box::new(|seed| {
            binary_case(&mut rng(seed), (-1.0, 1.0), |g, a, b| g.elementwise(ElementwiseKind::Mul, a, Some(b)))
        })),
        ("tanh", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.tanh(a)))),
        ("sigmoid", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.sigmoid(a)))),
        ("elementwise tanh", Box::new(|seed| {
            unary_case(&mut rng(seed), |g, a| g.elementwise(ElementwiseKind::Tanh, a, None).unwrap())
        })),
        ("elementwise sigmoid", Box::new(|seed| {
            unary_case(&mut rng(seed), |g, a| g.elementwise(ElementwiseKind::Sigmoid, a, None).unwrap())
        })),
        ("exp", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.exp(a)))),
        ("relu", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.relu(a)))),
        ("scale", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.scale(a, -1.7)))),
        ("add_scalar", Box::new(|seed| {
            unary_case(&mut rng(seed), |g, a| {
                let b = g.add_scalar(a, 0.3);
                g.mul(b, b).unwrap()
            })
        })),
        ("sum", Box::new(|seed| {
            unary_case(&mut rng(seed), |g, a| {
                let t = g.tanh(a);
                let s = g.sum(t);
                g.mul(s, s).unwrap()
            })
        })),
        ("transpose", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.transpose(a).unwrap()))),
        ("reshape", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.reshape(a, vec![3, 2]).unwrap()))),
        ("slice_cols", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.slice_cols(a, 1, 2).unwrap()))),
        ("row", Box::new(|seed| unary_case(&mut rng(seed), |g, a| g.row(a, 1).unwrap()))),
        ("concat_rows", Box::new(|seed| {
            binary_case(&mut rng(seed), (-1.0, 1.0), |g, a, b| {
                let b1 = g.row(b, 0)?;
                g.concat_rows(&[a, b1])
            })
        })),
        ("concat_cols", Box::new(|seed| {
            binary_case(&mut rng(seed), (-1.0, 1.0), |g, a, b| {
                let b1 = g.slice_cols(b, 0, 2)?;
                g.concat_cols(&[a, b1])
            })
        })),
        ("gather_rows", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let t = add_param(&mut s, "table", vec![5, 3], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let t = g.param(s, t);
                g.gather_rows(t, &[0, 2, 2, 4])
            })
        })),
        ("max_pool_rows", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let a = add_param(&mut s, "a", vec![4, 3], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let a = g.param(s, a);
                g.max_pool_rows(a)
            })
        })),
        ("cosine", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let a = add_param(&mut s, "a", vec![4], r, -1.0, 1.0);
            let b = add_param(&mut s, "b", vec![4], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let (a, b) = (g.param(s, a), g.param(s, b));
                g.cosine(a, b)
            })
        })),
        ("softmax", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let a = add_param(&mut s, "a", vec![5], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let a = g.param(s, a);
                g.softmax(a)
            })
        })),
        ("add_row_broadcast", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let a = add_param(&mut s, "a", vec![3, 4], r, -1.0, 1.0);
            let b = add_param(&mut s, "b", vec![4], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let (a, b) = (g.param(s, a), g.param(s, b));
                g.add_row_broadcast(a, b)
            })
        })),
        ("unfold", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let a = add_param(&mut s, "a", vec![4, 3], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let a = g.param(s, a);
                g.unfold(a, 3)
            })
        })),
        ("bilstm", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let layer = BiLstmLayer::new(&mut s, "l", 3, 2, r).unwrap();
            for id in layer.params() {
                let n = s.tensor(id).numel();
                s.set_values(id, &uniform(r, n, -1.0, 1.0)).unwrap();
            }
            let x = add_param(&mut s, "x", vec![4, 3], r, -1.0, 1.0);
            let h0 = add_param(&mut s, "h0", vec![1, 2], r, -1.0, 1.0);
            let c0 = add_param(&mut s, "c0", vec![1, 2], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let x = g.param(s, x);
                let init = LstmState {
                    h: g.param(s, h0),
                    c: g.param(s, c0),
                };
                let out = run_bilstm(g, s, &layer, x, Some((init, init)))?;
                let fin = g.concat_cols(&[out.fwd_final.c, out.bwd_final.c])?;
                let fin = g.reshape(fin, vec![1, 4])?;
                g.concat_rows(&[out.hidden, fin])
            })
        })),
        ("cnn", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let layer = CnnLayer::new(&mut s, "c", 3, 3, 4, r).unwrap();
            for id in [layer.filters, layer.bias] {
                let n = s.tensor(id).numel();
                s.set_values(id, &uniform(r, n, -1.0, 1.0)).unwrap();
            }
            let x = add_param(&mut s, "x", vec![5, 3], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let x = g.param(s, x);
                layer.encode(g, s, x)
            })
        })),
        ("attention-pooled score", Box::new(|seed| {
            let r = &mut rng(seed);
            let mut s = ParamStore::new();
            let q = add_param(&mut s, "hq", vec![3, 4], r, -1.0, 1.0);
            let h = add_param(&mut s, "hr", vec![2, 4], r, -1.0, 1.0);
            check_graph(&mut s, &move |g, s| {
                let (q, h) = (g.param(s, q), g.param(s, h));
                score_apcnn(g, q, h)
            })
        })),
        ("weighted-sum loss", Box::new(|seed| detector_case(ModelKind::WeightedSum, seed))),
        ("hr-cnn loss", Box::new(|seed| detector_case(ModelKind::HrCnn, seed))),
        ("hr-bilstm loss", Box::new(|seed| detector_case(ModelKind::HrBilstm, seed))),
    ]
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut total = CheckStats::default();
    let mut weakest = ("", 0.0);
    for (name, case) in gradient_cases() {
        let mut stats = CheckStats::default();
        for seed in 0..INSTANCES {
            stats.merge(case(seed));
        }
        ensure(stats.fraction() >= 0.95, || {
            format!("{name}: {}/{} coordinates within tolerance", stats.passed, stats.total)
        })?;
        if stats.worst >= weakest.1 {
            weakest = (name, stats.worst);
        }
        total.merge(stats);
    }
    within(start, Duration::from_secs(60), "gradient suite")?;
    Ok(format!(
        "{}/{} coordinates agree over {INSTANCES} instances per op; largest relative error {:.1e} ({}); {:.1?}",
        total.passed,
        total.total,
        weakest.1,
        weakest.0,
        start.elapsed()
    ))
}

// ------------------------------------------------------------------ oracles

const ORACLE_INSTANCES: usize = 200;
const EXACT: f64 = 1e-9;

fn random_words(rng: &mut ChaCha8Rng, vocab: &[&str], lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *vocab.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn criterion_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let words = ["mike", "kelley", "who", "is", "the", "writer", "of", "grant", "show", "2008", "tv", "kel", "ley"];

    for i in 0..ORACLE_INSTANCES {
        let a: String = (0..rng.gen_range(0..12)).map(|_| *b"ab c".choose(&mut rng).unwrap() as char).collect();
        let b: String = (0..rng.gen_range(0..12)).map(|_| *b"abc ".choose(&mut rng).unwrap() as char).collect();
        ensure(lccs_len(&a, &b) == lccs_brute(&a, &b), || format!("lccs instance {i}: {a:?} {b:?}"))?;
    }

    for i in 0..ORACLE_INSTANCES {
        let q = random_words(&mut rng, &words, 1, 9);
        let e = random_words(&mut rng, &words, 1, 3);
        let (s3, _) = simple_linker_score(&q, &e).map_err(|x| x.to_string())?;
        let (s2, _) = constraint_linker_score(&q, &e).map_err(|x| x.to_string())?;
        let (b3, b2) = (linker_brute(&q, &e, true), linker_brute(&q, &e, false));
        ensure((s3 - b3).abs() <= EXACT, || format!("simple linker instance {i}: {q:?}/{e:?} {s3} vs {b3}"))?;
        ensure((s2 - b2).abs() <= EXACT, || format!("constraint linker instance {i}: {q:?}/{e:?} {s2} vs {b2}"))?;
    }

    for i in 0..ORACLE_INSTANCES {
        let (n, m, d) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..5));
        let hq: Vec<Vec<f64>> = (0..n).map(|_| uniform(&mut rng, d, -1.0, 1.0)).collect();
        let hr: Vec<Vec<f64>> = (0..m).map(|_| uniform(&mut rng, d, -1.0, 1.0)).collect();
        let mut g = Graph::new();
        let q = g.input(Tensor::from_rows(&hq).unwrap());
        let r = g.input(Tensor::from_rows(&hr).unwrap());
        let s = score_apcnn(&mut g, q, r).map_err(|x| x.to_string())?;
        let (got, want) = (g.scalar(s), apcnn_brute(&hq, &hr));
        ensure((got - want).abs() <= EXACT, || format!("attention score instance {i}: {got} vs {want}"))?;
    }

    for i in 0..ORACLE_INSTANCES {
        let (p, n, gamma) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.01..1.0));
        let want: f64 = if gamma - p + n > 0.0 { gamma - p + n } else { 0.0 };
        let got = ranking_loss(p, n, gamma);
        ensure((got - want).abs() <= EXACT, || format!("ranking loss instance {i}"))?;
    }

    let kb = toy_kb();
    let entities: Vec<_> = kb.entity_ids().filter(|e| !kb.entity(*e).cvt).collect();
    let relation_names: Vec<&'static str> = kb
        .relation_ids()
        .map(|r| &*Box::leak(kb.relation(r).name.clone().into_boxed_str()))
        .collect();
    for i in 0..ORACLE_INSTANCES {
        let table: Vec<(&'static str, f64)> = relation_names
            .iter()
            .map(|n| (*n, (rng.gen_range(-4..=4) as f64) / 4.0))
            .collect();
        let scorer = KeywordScorer(table.clone());
        let count = rng.gen_range(1..=6);
        let chosen: Vec<_> = entities.choose_multiple(&mut rng, count).copied().collect();
        let linked: Vec<LinkerScore> = chosen
            .iter()
            .map(|e| LinkerScore {
                entity: *e,
                mention: Mention {
                    text: "x".into(),
                    start: 0,
                    len: 1,
                },
                score: rng.gen_range(0.0..2.0),
            })
            .collect();
        let cfg = PipelineConfig {
            k: 100,
            k_prime: 99,
            l: rng.gen_range(1..=4),
            alpha: rng.gen_range(0.0..=1.0),
            ..PipelineConfig::default()
        };
        let got = rerank_entities(&cfg, &kb, &scorer, "who", &linked).map_err(|x| x.to_string())?;
        let union: BTreeSet<usize> = chosen
            .iter()
            .flat_map(|e| kb.relations_of_entity(*e).unwrap())
            .map(|r| r.index())
            .collect();
        let all: Vec<(usize, f64)> = union.iter().map(|r| (*r, table[*r].1)).collect();
        for l in &linked {
            let rels: BTreeSet<usize> = kb.relations_of_entity(l.entity).unwrap().iter().map(|r| r.index()).collect();
            let want = rerank_brute(cfg.alpha, cfg.l, l.score, &rels, &all);
            let have = got.iter().find(|r| r.entity == l.entity).unwrap().score;
            ensure((have - want).abs() <= EXACT, || format!("rerank instance {i}: {have} vs {want}"))?;
        }
        ensure(got.windows(2).all(|w| w[0].score >= w[1].score), || format!("rerank instance {i} unsorted"))?;
    }

    let chains: Vec<_> = entities
        .iter()
        .flat_map(|e| kb.core_chain_candidates(*e).unwrap())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for i in 0..ORACLE_INSTANCES {
        let ne = rng.gen_range(1..=5);
        let picked: Vec<_> = entities.choose_multiple(&mut rng, ne).copied().collect();
        let mut cands = Vec::new();
        let mut brute = Vec::new();
        for e in &picked {
            let rr = rng.gen_range(0.0..2.0);
            let nc = rng.gen_range(1..=5);
            let cs: Vec<ScoredChain> = chains
                .choose_multiple(&mut rng, nc)
                .map(|c| ScoredChain {
                    chain: c.clone(),
                    score: rng.gen_range(-1.0..1.0),
                })
                .collect();
            brute.push((e.index(), rr, cs.iter().enumerate().map(|(k, c)| (k, c.score)).collect()));
            cands.push((
                RerankedEntity {
                    entity: *e,
                    mention: Mention {
                        text: "x".into(),
                        start: 0,
                        len: 1,
                    },
                    linker_score: rr,
                    relation_score: 0.0,
                    score: rr,
                },
                cs,
            ));
        }
        let beta = rng.gen_range(0.0..=1.0);
        let cfg = PipelineConfig {
            beta,
            ..PipelineConfig::default()
        };
        let got = generate_query(&cfg, &cands).ok_or("no query generated")?;
        let want = generate_brute(beta, &brute).unwrap();
        ensure((got.score - want).abs() <= EXACT, || format!("query generation instance {i}: {} vs {want}", got.score))?;
    }

    within(start, Duration::from_secs(30), "oracle suite")?;
    Ok(format!(
        "7 formulas x {ORACLE_INSTANCES} random instances agree within {EXACT:e}; {:.1?}",
        start.elapsed()
    ))
}

// --------------------------------------------------------------- toy overfit

fn keyword_task() -> Vec<TrainingExample> {
    let relations = [
        "people.person.place_of_birth",
        "people.person.spouse",
        "film.film.directed_by",
        "music.recording.artist",
        "book.written_work.author",
        "location.country.capital",
    ];
    let questions = [
        ("where was <e> born", 0),
        ("which city was <e> born in", 0),
        ("who is <e> married to", 1),
        ("who did <e> marry", 1),
        ("who directed <e>", 2),
        ("the film <e> was directed by whom", 2),
        ("who sang <e>", 3),
        ("who wrote the novel <e>", 4),
        ("the book <e> was wrote by whom", 4),
        ("what is the capital of <e>", 5),
    ];
    let pool: Vec<RelationInput> = relations.iter().map(|r| RelationInput::from_names(&[*r]).unwrap()).collect();
    questions
        .iter()
        .map(|(q, g)| TrainingExample {
            question: QuestionInput::from_text(q).unwrap(),
            gold: pool[*g].clone(),
            pool: pool.clone(),
        })
        .collect()
}

fn fit_epochs(data: &[TrainingExample], variant: ResidualVariant, max_epochs: usize, stop_at_perfect: bool) -> (usize, f64) {
    let mut cfg = ScorerConfig::for_model(ModelKind::HrBilstm);
    cfg.variant = variant;
    cfg.hidden = 50;
    cfg.embed_dim = 50;
    let mut model = RelationDetector::new(cfg, build_vocab(data), 11).unwrap();
    let mut acc = 0.0;
    for epoch in 1..=max_epochs {
        let hp = Hyperparams {
            learning_rate: 0.5,
            hidden_size: 50,
            epochs: 1,
            seed: 1000 + epoch as u64,
            ..Hyperparams::default()
        };
        acc = train(&mut model, data, &hp).unwrap().epochs[0].train_accuracy;
        if stop_at_perfect && acc == 1.0 {
            return (epoch, acc);
        }
    }
    (max_epochs, acc)
}

fn criterion_overfit() -> Outcome {
    let start = Instant::now();
    let data = keyword_task();
    let (epochs, acc) = fit_epochs(&data, ResidualVariant::HiddenShortcut, 200, true);
    ensure(acc == 1.0, || format!("hidden_shortcut reached only {acc:.3} train accuracy in 200 epochs"))?;
    let budget = epochs.max(5);
    let (_, shortcut) = fit_epochs(&data, ResidualVariant::HiddenShortcut, budget, false);
    let (_, second_only) = fit_epochs(&data, ResidualVariant::SecondLayerOnly, budget, false);
    ensure(shortcut >= second_only, || {
        format!("after {budget} epochs hidden_shortcut {shortcut:.3} < second_layer_only {second_only:.3}")
    })?;
    within(start, Duration::from_secs(300), "toy overfit")?;
    Ok(format!(
        "100% train accuracy after {epochs} epochs; at {budget} epochs hidden_shortcut {shortcut:.2} vs second_layer_only {second_only:.2}; {:.1?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------- residual wiring

fn criterion_residual() -> Outcome {
    let questions = ["who wrote <e>", "what tv show did <e> play on in 2008", "where"];
    let relations: [&[&str]; 3] = [&["episodes_written"], &["starring_roles", "series"], &["people.person.profession"]];
    let mut vocab_src = Vec::new();
    for q in questions {
        vocab_src.push(TrainingExample {
            question: QuestionInput::from_text(q).unwrap(),
            gold: RelationInput::from_names(relations[0]).unwrap(),
            pool: relations.iter().map(|r| RelationInput::from_names(r).unwrap()).collect(),
        });
    }
    let mut checked = 0;
    for seed in 0..INSTANCES {
        let mut cfg = ScorerConfig::for_model(ModelKind::HrBilstm);
        cfg.hidden = 5;
        cfg.embed_dim = 6;
        let mut det = RelationDetector::new(cfg.clone(), build_vocab(&vocab_src), seed).unwrap();
        let layer2: Vec<_> = det.params().ids().filter(|id| det.params().name(*id).starts_with("q2.")).collect();
        ensure(!layer2.is_empty(), || "no layer-2 parameters found".into())?;
        for id in layer2 {
            let n = det.params().tensor(id).numel();
            det.params_mut().set_values(id, &vec![0.0; n]).unwrap();
        }
        let layer1 = BiLstmLayer::bind(det.params(), "q1", cfg.embed_dim, cfg.hidden).unwrap();
        for q in questions {
            let q = QuestionInput::from_text(q).unwrap();
            for r in relations {
                let r = RelationInput::from_names(r).unwrap();
                let deep = det.score(&q, &r).map_err(|e| e.to_string())?;
                let mut g = Graph::new();
                let x = det.embedding().unwrap().embed(&mut g, det.params(), det.vocab(), q.tokens()).unwrap();
                let h = run_bilstm(&mut g, det.params(), &layer1, x, None).unwrap().hidden;
                let hq = g.max_pool_rows(h).unwrap();
                let RelationRepr::Vector(hr) = det.encode_relation(&mut g, &r).unwrap() else {
                    return Err("relation encoding is not pooled".into());
                };
                let c = g.cosine(hq, hr).unwrap();
                let single = g.scalar(c);
                ensure(deep.to_bits() == single.to_bits(), || {
                    format!("seed {seed}: residual score {deep:e} differs from single-layer {single:e}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} question/relation pairs bit-identical with zeroed layer 2"))
}

// -------------------------------------------------------- worked examples

fn names(kb: &KnowledgeBase, set: &BTreeSet<kbqa::kb::EntityId>) -> Vec<String> {
    set.iter().map(|e| kb.entity(*e).name.clone()).collect()
}

fn criterion_worked_examples() -> Outcome {
    let kb = toy_kb();
    let det = trained_toy_detector(&kb);
    let p = Pipeline::new(&kb, &det, PipelineConfig::default()).map_err(|e| e.to_string())?;

    let a = p
        .answer_question("what tv episodes were mike kelley the writer of")
        .map_err(|e| e.to_string())?;
    let got = names(&kb, &a.answers);
    ensure(got == ["Love Will Find a Way"], || format!("writer question answered {got:?}"))?;

    let b = p
        .answer_question("what tv show did grant show play on in 2008")
        .map_err(|e| e.to_string())?;
    let got = names(&kb, &b.answers);
    ensure(got == ["SwingTown"], || format!("grant show question answered {got:?}"))?;
    let chain = kb.chain_label(&b.query.chain);
    ensure(chain == "starring_roles-series", || format!("grant show chain {chain}"))?;
    let date = Constraint {
        node: 1,
        entity: kb.resolve_entity("d.2008-05-12").unwrap(),
        relation: kb.resolve_relation("from").unwrap(),
    };
    ensure(b.query.constraints.contains(&date), || {
        format!("year constraint missing: {:?}", b.query.constraints)
    })?;
    Ok(format!(
        "writer question -> Love Will Find a Way via {}; grant show question -> SwingTown via {chain} + 2008",
        kb.chain_label(&a.query.chain)
    ))
}

// ------------------------------------------------------- pipeline algebra

fn criterion_algebra() -> Outcome {
    let kb = toy_kb();
    let parses = toy_parses();
    let scorer = KeywordScorer(vec![("episodes_written", 0.9), ("profession", 0.3), ("series", 0.5), ("teams_played_for", -0.2)]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let entities: Vec<_> = kb.entity_ids().collect();

    let alpha_one = PipelineConfig {
        alpha: 1.0,
        k: 50,
        k_prime: 10,
        ..PipelineConfig::default()
    };
    let mut prefix_checks = 0;
    for p in &parses {
        let linked = link_top_k(&p.question, &kb, alpha_one.k).map_err(|e| e.to_string())?;
        let re = rerank_entities(&alpha_one, &kb, &scorer, &p.question, &linked).map_err(|e| e.to_string())?;
        let order: Vec<_> = re.iter().map(|r| r.entity).collect();
        let prefix: Vec<_> = linked.iter().take(order.len()).map(|l| l.entity).collect();
        ensure(order == prefix, || format!("{}: alpha=1 reordered the linker output", p.qid))?;
        prefix_checks += 1;
    }
    for _ in 0..ORACLE_INSTANCES {
        let n = rng.gen_range(1..=entities.len().min(12));
        let mut linked: Vec<LinkerScore> = entities
            .choose_multiple(&mut rng, n)
            .map(|e| LinkerScore {
                entity: *e,
                mention: Mention {
                    text: "x".into(),
                    start: 0,
                    len: 1,
                },
                score: rng.gen_range(0..4) as f64 / 2.0,
            })
            .collect();
        linked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity)));
        let re = rerank_entities(&alpha_one, &kb, &scorer, "who", &linked).map_err(|e| e.to_string())?;
        ensure(
            re.iter().map(|r| r.entity).eq(linked.iter().take(re.len()).map(|l| l.entity)),
            || "alpha=1 reordered a random linker list".into(),
        )?;
        prefix_checks += 1;
    }

    let mut subset_checks = 0;
    for e in kb.entity_ids() {
        for chain in kb.core_chain_candidates(e).unwrap() {
            let base = kb.execute_query(e, &chain, &[]).unwrap();
            for walk in kb.walk(e, &chain).unwrap() {
                for (node, &v) in walk.iter().enumerate().skip(1) {
                    for n in kb.subgraph_neighbors(&[v]) {
                        let c = Constraint {
                            node,
                            entity: n.neighbor,
                            relation: n.relation,
                        };
                        let filtered = kb.execute_query(e, &chain, &[c]).unwrap();
                        ensure(filtered.is_subset(&base), || "constrained answers escaped the base set".into())?;
                        subset_checks += 1;
                    }
                }
            }
        }
    }

    let det = trained_toy_detector(&kb);
    let again = trained_toy_detector(&kb);
    let third = trained_toy_detector(&kb);
    let bytes = |d: &RelationDetector| {
        let mut out = Vec::new();
        kbqa::tensor::write_checkpoint(&mut out, &d.to_checkpoint()).unwrap();
        out
    };
    ensure(bytes(&det) == bytes(&again) && bytes(&det) == bytes(&third), || {
        "repeated training produced different checkpoints".into()
    })?;
    let pipe = Pipeline::new(&kb, &det, PipelineConfig::default()).map_err(|e| e.to_string())?;
    for p in &parses {
        let runs: Vec<_> = (0..3).map(|_| pipe.answer_question(&p.question)).collect();
        ensure(runs[0] == runs[1] && runs[1] == runs[2], || format!("{}: answers differ across runs", p.qid))?;
        if let Ok(a) = &runs[0] {
            let base = kb.execute_query(a.query.entity, &a.query.chain, &[]).unwrap();
            ensure(a.answers.is_subset(&base), || format!("{}: constrained answers escaped", p.qid))?;
            subset_checks += 1;
        }
    }
    Ok(format!(
        "{prefix_checks} alpha=1 prefix checks, {subset_checks} subset checks, 3x identical training and answers"
    ))
}

// -------------------------------------------------------- ambiguity flip

fn criterion_ambiguity() -> Outcome {
    let kb = toy_kb();
    let q = "what tv episodes were mike kelley the writer of";
    let scorer = KeywordScorer(vec![("episodes_written", 0.9), ("profession", 0.2), ("teams_played_for", 0.3)]);
    let linked = link_top_k(q, &kb, 50).map_err(|e| e.to_string())?;
    let writer = kb.resolve_entity("m.mike_kelley_writer").unwrap();
    let player = kb.resolve_entity("m.mike_kelley_baseball").unwrap();
    let score_of = |e| linked.iter().find(|l| l.entity == e).map(|l| l.score);
    ensure(score_of(writer).is_some() && score_of(writer) == score_of(player), || {
        "the two Mike Kelley entities do not tie on the linker".into()
    })?;
    let top = |alpha: f64| -> Result<kbqa::kb::EntityId, String> {
        let cfg = PipelineConfig {
            alpha,
            ..PipelineConfig::default()
        };
        Ok(rerank_entities(&cfg, &kb, &scorer, q, &linked).map_err(|e| e.to_string())?[0].entity)
    };
    let (before, after) = (top(1.0)?, top(0.5)?);
    ensure(before == player, || format!("alpha=1 top entity is {}", kb.entity(before).key))?;
    ensure(after == writer, || format!("alpha=0.5 top entity is {}", kb.entity(after).key))?;
    Ok(format!(
        "top entity {} at alpha=1.0 -> {} at alpha=0.5",
        kb.entity(before).key,
        kb.entity(after).key
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("gradient suite", criterion_gradients),
        ("formula oracles", criterion_oracles),
        ("toy overfit", criterion_overfit),
        ("residual degeneracy", criterion_residual),
        ("worked examples", criterion_worked_examples),
        ("pipeline algebra", criterion_algebra),
        ("ambiguity resolution", criterion_ambiguity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{:.1?}]", i + 1, start.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
