#include "detcnn/tensor.hpp"

#include <cstring>
#include <limits>
#include <sstream>

#include "detcnn/error.hpp"

namespace detcnn {

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw config_error("tensor rank must be 1..4, got " + std::to_string(dims.size()));
  }
  std::size_t count = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw config_error("tensor dimensions must be >= 1");
    if (count > std::numeric_limits<std::size_t>::max() / d) {
      throw config_error("tensor element count overflows");
    }
    count *= d;
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate_dims(dims_); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate_dims(dims_); }

std::size_t Shape::numel() const noexcept {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

Shape Shape::batched(std::size_t n) const {
  std::vector<std::size_t> dims;
  dims.reserve(dims_.size() + 1);
  dims.push_back(n);
  dims.insert(dims.end(), dims_.begin(), dims_.end());
  return Shape(std::move(dims));
}

Shape Shape::unbatched() const {
  if (dims_.size() < 2) throw config_error("cannot drop batch axis of " + str());
  return Shape(std::vector<std::size_t>(dims_.begin() + 1, dims_.end()));
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw config_error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw config_error("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
bool BasicTensor<T>::bit_equal(const BasicTensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace detcnn
