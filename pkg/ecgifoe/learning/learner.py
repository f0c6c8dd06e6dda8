#
# This file is part of the ecgifoe package.
#


####################################
#    RegularizerLearner Interface  #  -->  Template Pattern
####################################


class RegularizerLearner:
    """
    Template to implement the training of regularizer parameters from pairs of
    clean and noisy fields, including loss monitoring during training.
    """

    def set_model(self, model):
        """
        Set the model to start training from.

        Args:
            model: RegularizerModel.
        """
        pass

    def set_data(self, data):
        """
        Set the training pairs. It is used to fit the model.

        Args:
            data: List of TrainingSample.
        """
        pass

    def set_budget(self, budget):
        """
        Set the number of optimizer steps.

        Args:
            budget: Number of steps (0 leaves the model untouched).
        """
        pass

    def fit(self):
        """
        Fit the model.
        """
        pass

    def evaluate(self, data=None):
        """
        Evaluate the training loss of the current model.

        Args:
            data: Optional pairs to evaluate on (the training pairs by default).

        Returns:
            float: The loss.
        """
        pass

    def get_model(self):
        """
        Get the trained model.

        Returns:
            RegularizerModel: The model with the lowest loss seen so far.
        """
        pass

    def get_num_samples(self):
        """
        Get the number of training pairs.
        """
        pass
