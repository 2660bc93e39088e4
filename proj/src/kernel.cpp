#include "moran/kernel.hpp"

namespace moran {

SiteFunction SiteFunction::constant(Vector values) {
  SiteFunction f;
  f.size_ = static_cast<std::size_t>(values.size());
  f.values_ = std::move(values);
  return f;
}

SiteFunction SiteFunction::zero(std::size_t size) {
  return constant(Vector::Zero(static_cast<Eigen::Index>(size)));
}

SiteFunction SiteFunction::dynamic(std::size_t size, Callback fn) {
  if (!fn) throw InvalidArgument("SiteFunction::dynamic requires a callback");
  SiteFunction f;
  f.size_ = size;
  f.fn_ = std::move(fn);
  return f;
}

Vector SiteFunction::operator()(const Measure& mu) const {
  if (!fn_) return values_;
  Vector v = fn_(mu);
  if (static_cast<std::size_t>(v.size()) != size_)
    throw SizeMismatch("site function callback returned wrong size");
  return v;
}

PairFunction PairFunction::constant(Matrix values) {
  if (values.rows() != values.cols())
    throw SizeMismatch("pair function matrix must be square");
  PairFunction f;
  f.size_ = static_cast<std::size_t>(values.rows());
  f.values_ = std::move(values);
  return f;
}

PairFunction PairFunction::zero(std::size_t size) {
  const auto n = static_cast<Eigen::Index>(size);
  return constant(Matrix::Zero(n, n));
}

PairFunction PairFunction::dynamic(std::size_t size, Callback fn) {
  if (!fn) throw InvalidArgument("PairFunction::dynamic requires a callback");
  PairFunction f;
  f.size_ = size;
  f.fn_ = std::move(fn);
  return f;
}

Matrix PairFunction::operator()(const Measure& mu) const {
  if (!fn_) return values_;
  Matrix m = fn_(mu);
  if (static_cast<std::size_t>(m.rows()) != size_ ||
      static_cast<std::size_t>(m.cols()) != size_)
    throw SizeMismatch("pair function callback returned wrong shape");
  return m;
}

SelectionKernel::SelectionKernel(Form form) : form_(std::move(form)) {
  if (const auto* g = std::get_if<GeneralKernel>(&form_)) {
    size_ = g->symmetric.size();
    for (const auto& c : g->components) {
      if (static_cast<std::size_t>(c.death.size()) != size_ ||
          static_cast<std::size_t>(c.birth.size()) != size_)
        throw SizeMismatch("general kernel component has wrong size");
    }
  } else {
    const auto& a = std::get<AdditiveKernel>(form_);
    size_ = a.symmetric.size();
    if (a.death.size() != size_ || a.birth.size() != size_)
      throw SizeMismatch("additive kernel parts have inconsistent sizes");
  }
}

SelectionKernel SelectionKernel::none(std::size_t size) {
  return SelectionKernel(AdditiveKernel{SiteFunction::zero(size),
                                        SiteFunction::zero(size),
                                        PairFunction::zero(size)});
}

SelectionKernel SelectionKernel::general_from_matrix(const Matrix& v) {
  if (v.rows() != v.cols()) throw SizeMismatch("kernel matrix must be square");
  const Eigen::Index n = v.rows();
  GeneralKernel g;
  g.symmetric = PairFunction::zero(static_cast<std::size_t>(n));
  for (Eigen::Index z = 0; z < n; ++z) {
    GeneralKernel::Component c;
    c.death = Vector::Zero(n);
    c.death[z] = 1.0;
    c.birth = v.row(z).transpose();
    g.components.push_back(std::move(c));
  }
  return SelectionKernel(std::move(g));
}

SelectionKernel SelectionKernel::additive(Vector death, Vector birth,
                                          Matrix symmetric) {
  const auto n = death.size();
  if (symmetric.size() == 0) symmetric = Matrix::Zero(n, n);
  return SelectionKernel(AdditiveKernel{SiteFunction::constant(std::move(death)),
                                        SiteFunction::constant(std::move(birth)),
                                        PairFunction::constant(std::move(symmetric))});
}

const AdditiveKernel& SelectionKernel::additive_form() const {
  const auto* a = std::get_if<AdditiveKernel>(&form_);
  if (!a) throw NotAdditive();
  return *a;
}

bool SelectionKernel::mu_dependent() const {
  if (const auto* g = std::get_if<GeneralKernel>(&form_))
    return g->symmetric.mu_dependent();
  const auto& a = std::get<AdditiveKernel>(form_);
  return a.death.mu_dependent() || a.birth.mu_dependent() ||
         a.symmetric.mu_dependent();
}

Matrix SelectionKernel::symmetric_part(const Measure& mu) const {
  if (const auto* g = std::get_if<GeneralKernel>(&form_)) return g->symmetric(mu);
  return std::get<AdditiveKernel>(form_).symmetric(mu);
}

Matrix SelectionKernel::non_symmetric(const Measure& mu) const {
  const auto n = static_cast<Eigen::Index>(size_);
  Matrix v = Matrix::Zero(n, n);
  if (const auto* g = std::get_if<GeneralKernel>(&form_)) {
    for (const auto& c : g->components) v.noalias() += c.death * c.birth.transpose();
    return v;
  }
  const auto& a = std::get<AdditiveKernel>(form_);
  const Vector d = a.death(mu);
  const Vector b = a.birth(mu);
  v.colwise() += d;
  v.rowwise() += b.transpose();
  return v;
}

Matrix SelectionKernel::evaluate(const Measure& mu) const {
  return non_symmetric(mu) + symmetric_part(mu);
}

std::string SelectionKernel::variant_name() const {
  return is_additive() ? "additive" : "general";
}

}  // namespace moran
