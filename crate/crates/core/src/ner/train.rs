use ademiner_nn::layers::Mode;
use ademiner_nn::{Adam, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tags, Document, TagScheme};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::{EntityEvaluator, EntityMatchReport, MatchMode};
use crate::train::{shuffled_batches, EpochLog, TrainReport};

use super::model::{forward, NerModel, NerSpec, SentenceInput, WordVocab};
use super::{CharVocab, NerConfig};

struct Example {
    input: SentenceInput,
    labels: Vec<usize>,
}

fn examples(model: &NerModel, docs: &[Document], store: &EmbeddingStore) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs.iter().filter(|d| !d.is_empty()) {
        let spans = doc
            .gold_spans
            .as_deref()
            .ok_or_else(|| Error::Training(format!("{} has no gold spans", doc.doc_id)))?;
        let labels = tags::encode(doc.len(), spans, TagScheme::Iob)?
            .into_iter()
            .map(|t| t.iob_index().expect("IOB tag"))
            .collect();
        out.push(Example {
            input: model.input(doc, store)?,
            labels,
        });
    }
    Ok(out)
}

/// Trains the tagger on token-level cross-entropy. Each batch holds
/// `batch_size` sentences and the loss is the mean over all their tokens.
/// With a non-empty `dev` set the epoch with the best strict micro F1 is
/// kept.
pub fn train_ner(
    train: &[Document],
    dev: &[Document],
    store: &EmbeddingStore,
    config: &NerConfig,
) -> Result<(NerModel, TrainReport)> {
    config.train.validate()?;
    if train.iter().all(Document::is_empty) {
        return Err(Error::Training("empty training corpus".into()));
    }
    let chars = CharVocab::from_tokens(train.iter().flat_map(|d| d.words()));
    let words = config
        .train_word_embeddings
        .then(|| WordVocab::from_words(train.iter().flat_map(|d| d.words().map(str::to_string))));
    let spec = NerSpec::from_config(store.dim(), config);
    let mut model = NerModel::new(spec, chars, words, config.train.seed)?;
    let data = examples(&model, train, store)?;
    let cfg = &config.train;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new();
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ademiner_nn::ParamSet)> = None;
    let has_dev = dev.iter().any(|d| !d.is_empty());

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for batch in shuffled_batches(data.len(), cfg.batch_size, 1, &mut rng) {
            let mut g = Graph::new();
            let bound = model.params().bind(&mut g);
            let mut outs = Vec::with_capacity(batch.len());
            let mut labels = Vec::new();
            for &i in &batch {
                outs.push(forward(
                    &mut g,
                    &bound,
                    model.spec(),
                    &data[i].input,
                    Mode::Train,
                    cfg.dropout_rate,
                    &mut rng,
                )?);
                labels.extend_from_slice(&data[i].labels);
            }
            let logits = g.concat_rows(&outs)?;
            let loss = g.softmax_cross_entropy(logits, &labels, None)?;
            loss_sum += f64::from(g.value(loss).data()[0]);
            n_batches += 1;
            g.backward(loss)?;
            let grads = model.params().grads(&g, &bound);
            adam.step(model.params_mut(), &grads, cfg, epoch)?;
        }
        let mut log = EpochLog {
            epoch,
            learning_rate: cfg.effective_lr(epoch),
            train_loss: loss_sum / n_batches.max(1) as f64,
            dev_loss: None,
            dev_score: None,
        };
        if has_dev {
            let score = evaluate_ner(&model, dev, store, MatchMode::Relax)?.strict.micro_avg.f1;
            log.dev_score = Some(score);
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, model.params().clone()));
                report.selected_epoch = epoch;
            }
        } else {
            report.selected_epoch = epoch;
        }
        log::debug!(
            "ner epoch {epoch}: lr {:.6} loss {:.5} dev strict F1 {:?}",
            log.learning_rate,
            log.train_loss,
            log.dev_score
        );
        report.epochs.push(log);
    }
    if let Some((_, params)) = best {
        model.set_params(params);
    }
    Ok((model, report))
}

/// Strict and relax entity scores of the tagger's predictions.
pub fn evaluate_ner(
    model: &NerModel,
    docs: &[Document],
    store: &EmbeddingStore,
    relax_mode: MatchMode,
) -> Result<EntityMatchReport> {
    let mut ev = EntityEvaluator::new(relax_mode);
    for doc in docs {
        let gold = doc
            .gold_spans
            .as_deref()
            .ok_or_else(|| Error::Evaluation(format!("{} has no gold spans", doc.doc_id)))?;
        ev.add(gold, &model.predict_entities(doc, store)?)?;
    }
    Ok(ev.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ademiner_nn::gradcheck::{central_difference, relative_error};
    use ademiner_nn::ParamSet;

    fn loss_and_filter_grad(params: &ParamSet<f64>, spec: &NerSpec, data: &[Example]) -> (f64, Vec<f64>) {
        let mut g = Graph::<f64>::new();
        let bound = params.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut outs = Vec::new();
        let mut labels = Vec::new();
        for ex in data {
            outs.push(forward(&mut g, &bound, spec, &ex.input, Mode::Infer, 0.0, &mut rng).unwrap());
            labels.extend_from_slice(&ex.labels);
        }
        let logits = g.concat_rows(&outs).unwrap();
        let loss = g.softmax_cross_entropy(logits, &labels, None).unwrap();
        let value = g.value(loss).data()[0];
        g.backward(loss).unwrap();
        (value, params.grads(&g, &bound).remove("char.conv_w").unwrap())
    }

    #[test]
    fn char_filter_gradients_match_finite_differences() {
        let docs = crate::synth::ner_corpus(3);
        let store = crate::synth::embeddings(6, 1).unwrap();
        let config = NerConfig {
            char_dim: 4,
            char_filters: 3,
            hidden: 4,
            ..NerConfig::default()
        };
        let chars = CharVocab::from_tokens(docs.iter().flat_map(|d| d.words()));
        let model = NerModel::new(NerSpec::from_config(6, &config), chars, None, 7).unwrap();
        let data = examples(&model, &docs, &store).unwrap();
        let params: ParamSet<f64> = model.params().cast();
        let (_, analytic) = loss_and_filter_grad(&params, model.spec(), &data);
        let numeric = central_difference(
            |x| {
                let mut p = params.clone();
                p.get_mut("char.conv_w").unwrap().data_mut().copy_from_slice(x);
                loss_and_filter_grad(&p, model.spec(), &data).0
            },
            params.tensor("char.conv_w").data(),
            1e-5,
        );
        let err = relative_error(&analytic, &numeric);
        assert!(err <= 1e-4, "relative error {err:e}");
    }
}
