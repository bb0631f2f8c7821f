#include "disco/model.hpp"

namespace disco {

Model Model::init(const ModelConfig& cfg, Vocab vocab, LabelSet labels, std::mt19937_64& rng,
                  std::optional<Tensor> pretrained_embeddings) {
  Model m;
  m.cfg = cfg;
  m.vocab = std::move(vocab);
  m.labels = std::move(labels);

  if (pretrained_embeddings) {
    if (pretrained_embeddings->shape() != Shape{m.vocab.size(), cfg.d}) {
      throw Error(ErrorKind::dimension,
                  "embedding matrix shape " + shape_str(pretrained_embeddings->shape()) +
                      " does not match vocab " + std::to_string(m.vocab.size()) + " x d " +
                      std::to_string(cfg.d));
    }
    m.embeddings = *pretrained_embeddings;
    m.embeddings.set_requires_grad(true);
  } else {
    m.embeddings = init_embeddings(m.vocab, cfg.d, rng);
  }
  m.enc_fwd = LstmParams::init(cfg.hidden, cfg.d, rng, cfg.forget_bias_one);
  m.enc_bwd = LstmParams::init(cfg.hidden, cfg.d, rng, cfg.forget_bias_one);
  m.dec = LstmParams::init(cfg.hidden, cfg.d, rng, cfg.forget_bias_one);
  m.attn = AttentionParams::init(cfg.hidden, m.vocab.size(), rng);
  m.fusion = FusionParams::init(cfg.hidden, cfg.k, cfg.fusion_concat, rng);
  m.cls = RelationClassifierParams::init(m.labels.size(), m.fusion.fused_width(), rng);
  return m;
}

std::vector<Tensor> Model::encoder_decoder_params() const {
  return {embeddings, enc_fwd.W, enc_fwd.b, enc_bwd.W, enc_bwd.b,
          dec.W,      dec.b,     attn.W_alpha, attn.W_c, attn.W_s, attn.b_s};
}

std::vector<Tensor> Model::classifier_params() const {
  return {fusion.W_i, fusion.b_i, cls.W_r, cls.b_r};
}

std::vector<Tensor> Model::all_params() const {
  auto out = encoder_decoder_params();
  auto cl = classifier_params();
  out.insert(out.end(), cl.begin(), cl.end());
  return out;
}

std::vector<std::vector<double>> Model::snapshot() const {
  std::vector<std::vector<double>> snap;
  for (const Tensor& p : all_params()) snap.push_back(p.values());
  snap.push_back(memory.empty() ? std::vector<double>{} : memory.M.values());
  return snap;
}

void Model::restore(const std::vector<std::vector<double>>& snap) {
  auto params = all_params();
  if (snap.size() != params.size() + 1) {
    throw Error(ErrorKind::usage, "snapshot does not match this model's parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (snap[i].size() != params[i].size()) {
      throw Error(ErrorKind::usage, "snapshot entry " + std::to_string(i) + " has wrong size");
    }
    params[i].values() = snap[i];
  }
  if (!memory.empty()) {
    if (snap.back().size() != memory.M.size()) {
      throw Error(ErrorKind::usage, "snapshot memory block has wrong size");
    }
    memory.M.values() = snap.back();
  }
}

Forward forward(Tape& tape, Model& model, const EncodedInstance& enc, const ForwardOpts& opts) {
  if (opts.training && opts.rng == nullptr) {
    throw Error(ErrorKind::usage, "training-mode forward needs an rng");
  }

  Forward out;

  // Embed the source, dropout after the embedding layer, encode.
  std::vector<Tensor> xs;
  xs.reserve(enc.source_ids.size());
  for (std::size_t id : enc.source_ids) {
    Tensor x = embed_row(tape, model.embeddings, id);
    if (opts.training && opts.q1 > 0.0) x = dropout(tape, x, opts.q1, true, *opts.rng);
    xs.push_back(x);
  }
  EncoderOutput encoded = encode(tape, xs, model.enc_fwd, model.enc_bwd);
  out.h_e = encoded.h;

  LstmState dec_init = model.cfg.decoder_zero_init ? lstm_zero_state(model.cfg.hidden)
                                                   : encoded.fwd_final;
  DecodeOpts dopts;
  dopts.training = opts.training;
  dopts.emb_dropout = opts.q1;
  dopts.rng = opts.rng;
  if (opts.gold_target) {
    out.dec = decode_train(tape, enc.target_ids, out.h_e, model.embeddings, model.dec,
                           model.attn, dec_init, opts.teacher_prob, dopts);
  } else {
    out.dec = decode_test(tape, enc, out.h_e, model.embeddings, model.dec, model.attn,
                          dec_init);
  }

  if (!opts.run_classifier) return out;

  Tensor pooled_enc = pool_sequence(tape, out.h_e, model.fusion.k);
  Tensor pooled_dec = pool_sequence(tape, out.dec.hd_hat, model.fusion.k);
  out.h_star = gated_interaction(tape, pooled_enc, pooled_dec, model.fusion);

  MemoryRead read = memory_read(tape, model.memory, out.h_star, opts.exclude_id);
  out.k_vec = read.k_vec;
  out.mem_weights = read.weights;

  Tensor feature = concat(tape, out.k_vec, out.h_star);
  if (opts.training && opts.q2 > 0.0) feature = dropout(tape, feature, opts.q2, true, *opts.rng);
  out.dist = classify_feature(tape, feature, model.cls);
  return out;
}

}  // namespace disco
